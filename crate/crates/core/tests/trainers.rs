use marlbench::algorithms::*;
use marlbench::task::TaskSpec;

fn small(alg: Algorithm, sharing: bool) -> TrainerConfig {
    let mut cfg = TrainerConfig::new(alg);
    cfg.hidden_dim = 8;
    cfg.mixer_embed = 4;
    cfg.parameter_sharing = sharing;
    cfg.n_workers = 2;
    cfg.n_step = 3;
    cfg.warmup = 20;
    cfg.batch_size = 4;
    cfg
}

fn task(name: &str) -> TaskSpec {
    name.parse().unwrap()
}

#[test]
fn every_trainer_passes_gradient_check() {
    for name in ["penalty-k0", "Foraging-5x5-2p-1f-v1"] {
        for alg in Algorithm::ALL {
            for sharing in [true, false] {
                let tr = build_trainer_for_task(&small(alg, sharing), &task(name), None, 3).unwrap();
                let report = tr.gradient_check(11);
                assert!(report.checked > 0);
                assert!(
                    report.max_rel_error < 1e-4,
                    "{alg} sharing={sharing} on {name}: {report:?}"
                );
            }
        }
    }
}

#[test]
fn training_is_deterministic_given_seed() {
    for alg in Algorithm::ALL {
        let cfg = small(alg, true);
        let run = || {
            let mut tr = build_trainer_for_task(&cfg, &task("climbing"), Some(5), 42).unwrap();
            tr.train_until(60).unwrap();
            tr.parameters().iter().flat_map(|s| s.flat()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run(), "{alg}");
    }
}

#[test]
fn checkpoint_round_trip_restores_parameters() {
    let dir = tempfile::tempdir().unwrap();
    for alg in Algorithm::ALL {
        let cfg = small(alg, false);
        let mut a = build_trainer_for_task(&cfg, &task("penalty-k0"), None, 1).unwrap();
        a.train_until(40).unwrap();
        let path = dir.path().join(format!("{alg}.ckpt"));
        save_trainer(&path, a.as_ref()).unwrap();
        let mut b = build_trainer_for_task(&cfg, &task("penalty-k0"), None, 2).unwrap();
        load_trainer(&path, b.as_mut()).unwrap();
        let flat = |t: &dyn Trainer| t.parameters().iter().flat_map(|s| s.flat()).collect::<Vec<_>>();
        let (fa, fb) = (flat(a.as_ref()), flat(b.as_ref()));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(*x as f32, *y as f32, "{alg}");
        }
    }
}

#[test]
fn checkpoint_for_other_architecture_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    let a = build_trainer_for_task(&small(Algorithm::Iql, true), &task("penalty-k0"), None, 1).unwrap();
    save_trainer(&path, a.as_ref()).unwrap();
    let mut b = build_trainer_for_task(&small(Algorithm::Qmix, true), &task("penalty-k0"), None, 1).unwrap();
    assert!(load_trainer(&path, b.as_mut()).is_err());
}

#[test]
fn first_ppo_epoch_has_unit_ratio() {
    for alg in [Algorithm::Ippo, Algorithm::Mappo] {
        let mut tr = PolicyTrainer::new(small(alg, true), &|| task("penalty-k0").build(), 5).unwrap();
        tr.train_until(30).unwrap();
        let dev = tr.first_epoch_ratio_deviation().unwrap();
        assert!(dev < 1e-12, "{alg}: {dev}");
    }
}

#[test]
fn zero_advantage_leaves_only_entropy_gradient() {
    for alg in [Algorithm::Ia2c, Algorithm::Ippo, Algorithm::Maa2c, Algorithm::Mappo] {
        let tr = PolicyTrainer::new(small(alg, false), &|| task("climbing").build(), 9).unwrap();
        let (full, entropy) = tr.zero_advantage_actor_gradient(4);
        assert_eq!(full.len(), entropy.len());
        for (a, b) in full.iter().zip(&entropy) {
            assert!((a - b).abs() < 1e-12, "{alg}");
        }
    }
}

#[test]
fn constant_critic_gives_only_regulariser_gradient() {
    for sharing in [true, false] {
        let mut tr = MaddpgTrainer::new(small(Algorithm::Maddpg, sharing), task("climbing").build().unwrap(), 2).unwrap();
        tr.set_constant_critic(3.5);
        let full = tr.actor_gradient(6);
        let reg = tr.regulariser_gradient(6);
        for (a, b) in full.iter().zip(&reg) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
