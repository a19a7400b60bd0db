use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetSplit, Interaction, InteractionLog, SplitKind};
use crate::fsutil::write_atomic;

/// Reads `user item [timestamp]` rows separated by tabs or spaces.
/// `#` lines and blank lines are skipped.
pub fn read_interactions(path: &Path) -> Result<InteractionLog, DataError> {
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_interactions(BufReader::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_interactions<R: BufRead>(reader: R) -> Result<InteractionLog, DataError> {
    // (raw user, raw item) -> earliest timestamp
    let mut rows: HashMap<(i64, i64), Option<i64>> = HashMap::new();
    let mut all_timestamped = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: Default::default(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(DataError::Parse {
                line: line_no,
                msg: format!("expected `user item [timestamp]`, found {} fields", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<i64, DataError> {
            s.parse::<i64>().map_err(|_| DataError::Parse {
                line: line_no,
                msg: format!("{what} `{s}` is not an integer"),
            })
        };
        let user = parse(fields[0], "user")?;
        let item = parse(fields[1], "item")?;
        let ts = match fields.get(2) {
            Some(s) => Some(parse(s, "timestamp")?),
            None => {
                all_timestamped = false;
                None
            }
        };
        rows.entry((user, item))
            .and_modify(|prev| {
                *prev = match (*prev, ts) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                }
            })
            .or_insert(ts);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyLog);
    }

    let users: BTreeMap<i64, u32> = dense_ids(rows.keys().map(|k| k.0));
    let items: BTreeMap<i64, u32> = dense_ids(rows.keys().map(|k| k.1));
    let mut interactions: Vec<Interaction> = rows
        .into_iter()
        .map(|((u, i), ts)| Interaction {
            user: users[&u],
            item: items[&i],
            timestamp: ts.unwrap_or(0),
        })
        .collect();
    interactions.sort_by_key(|it| (it.user, it.item));

    Ok(InteractionLog {
        interactions,
        num_users: users.len(),
        num_items: items.len(),
        has_timestamps: all_timestamped,
        user_ids: users.keys().copied().collect(),
        item_ids: items.keys().copied().collect(),
    })
}

fn dense_ids(raw: impl Iterator<Item = i64>) -> BTreeMap<i64, u32> {
    let mut map: BTreeMap<i64, u32> = raw.map(|r| (r, 0)).collect();
    for (dense, v) in map.values_mut().enumerate() {
        *v = dense as u32;
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// `manifest.json` written next to the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub num_users: usize,
    pub num_items: usize,
    pub counts: SplitCounts,
    pub split_kind: SplitKind,
    pub seed: Option<u64>,
}

const PARTS: [&str; 3] = ["train.tsv", "validation.tsv", "test.tsv"];

/// Writes `train.tsv`, `validation.tsv`, `test.tsv`, `manifest.json` and,
/// when a log is given, the `user_map.tsv` / `item_map.tsv` id sidecars.
pub fn write_split(
    split: &DatasetSplit,
    log: Option<&InteractionLog>,
    dir: &Path,
) -> Result<SplitManifest, DataError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, lists) in PARTS
        .iter()
        .zip([&split.train, &split.validation, &split.test])
    {
        let mut text = String::new();
        for (u, items) in lists.iter().enumerate() {
            for i in items {
                text.push_str(&format!("{u}\t{i}\n"));
            }
        }
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
    }
    if let Some(log) = log {
        for (name, ids) in [("user_map.tsv", &log.user_ids), ("item_map.tsv", &log.item_ids)] {
            let text: String = ids
                .iter()
                .enumerate()
                .map(|(dense, raw)| format!("{dense}\t{raw}\n"))
                .collect();
            let path = dir.join(name);
            write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
        }
    }
    let manifest = SplitManifest {
        num_users: split.num_users,
        num_items: split.num_items,
        counts: SplitCounts {
            train: split.train_count(),
            validation: split.validation_count(),
            test: split.test_count(),
        },
        split_kind: split.kind,
        seed: split.seed,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, &json).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads a split directory produced by [`write_split`]. Ids in the part
/// files are already dense and are not remapped.
pub fn read_split(dir: &Path) -> Result<DatasetSplit, DataError> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|source| DataError::Io {
        path: mpath.clone(),
        source,
    })?;
    let manifest: SplitManifest =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;

    let mut parts = Vec::with_capacity(3);
    for name in PARTS {
        let path = dir.join(name);
        let file = fs::File::open(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        let mut lists = vec![Vec::new(); manifest.num_users];
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| DataError::Io {
                path: path.clone(),
                source,
            })?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut f = t.split_whitespace();
            let parse = |s: Option<&str>| -> Option<u32> { s?.parse().ok() };
            let (u, i) = match (parse(f.next()), parse(f.next())) {
                (Some(u), Some(i)) if (u as usize) < manifest.num_users && (i as usize) < manifest.num_items => (u, i),
                _ => {
                    return Err(DataError::Parse {
                        line: idx + 1,
                        msg: format!("{name}: bad or out-of-range row `{t}`"),
                    })
                }
            };
            lists[u as usize].push(i);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        parts.push(lists);
    }
    let test = parts.pop().unwrap();
    let validation = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(DatasetSplit {
        kind: manifest.split_kind,
        num_users: manifest.num_users,
        num_items: manifest.num_items,
        train,
        validation,
        test,
        seed: manifest.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<InteractionLog, DataError> {
        parse_interactions(text.as_bytes())
    }

    #[test]
    fn duplicates_keep_earliest_timestamp() {
        let log = parse("0\t1\t10\n0\t1\t5\n1\t2\t7\n").unwrap();
        assert_eq!(log.interactions.len(), 2);
        let first = log.interactions[0];
        assert_eq!((first.user, first.item, first.timestamp), (0, 0, 5));
        assert!(log.has_timestamps);
    }

    #[test]
    fn counts_users_and_items() {
        let log = parse("10 1\n10 2\n11 3\n12 4\n12 1\n").unwrap();
        assert_eq!(log.num_users, 3);
        assert_eq!(log.num_items, 4);
        assert!(!log.has_timestamps);
        assert_eq!(log.user_ids, vec![10, 11, 12]);
    }

    #[test]
    fn non_integer_row_reports_line() {
        match parse("a b\n") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse("# header\n1 2\n1 x\n") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(DataError::EmptyLog)));
        assert!(matches!(parse("# only a comment\n\n"), Err(DataError::EmptyLog)));
    }
}
