use std::collections::BTreeMap;
use std::path::PathBuf;

use drrl_core::config::{parse_config, RunConfig};
use drrl_core::dataio::SplitKind;
use drrl_core::graphmodel::BackboneKind;
use drrl_core::losses::LossKind;

fn presets() -> BTreeMap<String, RunConfig> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("cfg") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let set = parse_config(&text, Vec::new()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(set.runs.len(), 1);
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        out.insert(name, set.runs.into_iter().next().unwrap().config);
    }
    out
}

#[test]
fn every_preset_loads_and_validates() {
    let all = presets();
    assert_eq!(all.len(), 4 * 3 * 6 + 2 * 4);
    for (name, cfg) in &all {
        assert!(cfg.validate().is_empty(), "{name}: {:?}", cfg.validate());
        let parts: Vec<&str> = name.split('-').collect();
        let (backbone, loss) = (parts[parts.len() - 2], parts[parts.len() - 1]);
        assert_eq!(cfg.backbone.kind.to_string(), backbone, "{name}");
        assert_eq!(cfg.loss.kind.to_string(), loss, "{name}");
        assert_eq!(cfg.split.kind == SplitKind::Temporal, name.contains("-ood-"), "{name}");
        assert_eq!((cfg.train.batch_size, cfg.train.n_neg, cfg.train.patience), (1024, 1024, 25));
        assert_eq!(cfg.eval.ks, vec![10, 20]);
    }
}

#[test]
fn selected_cells_carry_the_tuned_values() {
    let all = presets();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);

    let g = &all["gowalla-mf-drrl"];
    assert!(close(g.train.lr, 1e-5) && g.train.weight_decay == 0.0);
    assert!(close(g.loss.gamma_star, 1.09 / 0.09));
    assert!(close(g.loss.lr_beta, 1e-5) && close(g.loss.beta0, 0.85) && g.loss.c == 1.0);

    let c = &all["gowalla-lightgcn-ccl"];
    assert!(close(c.loss.alpha, 160.0) && close(c.loss.margin, 0.90));

    let b = &all["amazonbeauty-xsimgcl-bce"];
    assert_eq!(b.backbone.kind, BackboneKind::XSimGcl);
    assert!(close(b.train.lr, 1e-2) && close(b.train.weight_decay, 1e-6));

    let s = &all["amazonelectronics-mf-sl"];
    assert_eq!(s.loss.kind, LossKind::Sl);
    assert!(close(s.loss.tau, 0.26) && close(s.train.lr, 1e-1));
    assert_eq!(s.split.k_core, Some(10));

    let k = &all["amazonkitchen-ood-mf-drrl"];
    assert_eq!(k.split.kind, SplitKind::Temporal);
    assert_eq!(k.split.k_core, Some(5));
    assert!(close(k.train.lr, 1e-2));
    assert!(close(k.loss.gamma_star, 2.5 / 1.5) && close(k.loss.c, 5.0));
    assert!(close(k.loss.lr_beta, 1e-4) && close(k.loss.beta0, 0.85));

    let e = &all["amazonelectronics-ood-mf-drrl"];
    assert!(close(e.train.lr, 1e-1) && close(e.loss.c, 1.25) && close(e.loss.gamma_star, 1.16 / 0.16));
}
