use std::path::PathBuf;

use shapeedit_cli::{RunConfig, Variant};
use shapeedit_core::Error;

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = RunConfig {
        output_dir: Some(PathBuf::from("runs/x")),
        ..RunConfig::default()
    };
    let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
}

#[test]
fn missing_keys_take_defaults() {
    let cfg = RunConfig::from_toml("seed = 7\n[joint]\nexperts = 4\n").unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.joint.experts, 4);
    assert_eq!(cfg.joint.epochs, 20);
    assert_eq!(cfg.joint.batch_size, 64);
    assert_eq!(cfg.edit.neighbors, 64);
    assert_eq!(cfg.edit.steps, 50);
    assert_eq!(cfg.seeds, vec![1, 2, 3]);
    assert_eq!(cfg.variants, Variant::ALL.to_vec());
}

#[test]
fn hash_ignores_the_output_directory_only() {
    let a = RunConfig::default();
    let b = RunConfig {
        output_dir: Some(PathBuf::from("elsewhere")),
        ..RunConfig::default()
    };
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    let c = RunConfig {
        seed: 2,
        ..RunConfig::default()
    };
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    let mut d = RunConfig::default();
    d.edit.use_simplex = false;
    assert_ne!(a.hash().unwrap(), d.hash().unwrap());
}

#[test]
fn invalid_configs_are_config_errors() {
    for text in [
        "unknown = 1\n",
        "[joint]\nheads = 3\n",
        "[edit]\ninit_noise = 0.0\n",
        "seeds = []\n",
        "variants = []\n",
        "variants = [\"nonsense\"]\n",
        "[benchmark]\nedits = 0\n",
        "[metrics]\nswell = -0.1\n",
        "[dataset]\ncontexts = 0\n",
    ] {
        assert!(
            matches!(RunConfig::from_toml(text), Err(Error::Config(_))),
            "{text:?} accepted"
        );
    }
}

#[test]
fn variants_set_the_objective() {
    let base = RunConfig::default().joint;
    assert_eq!(Variant::Baseline.joint_config(&base).lambda, 0.0);
    assert_eq!(Variant::Baseline.joint_config(&base).variant(), "baseline");
    for v in [
        Variant::Multiutterance,
        Variant::SharedContext,
        Variant::Random,
    ] {
        let cfg = v.joint_config(&base);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.variant(), v.name());
        assert_eq!(Variant::parse(v.name()), Some(v));
    }
    assert_eq!(Variant::parse("ladder"), None);
}
