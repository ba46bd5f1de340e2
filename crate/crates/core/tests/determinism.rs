//! Identical seeds give identical results; different seeds do not.

use advsim::envs::{make_target, EnvSpec, GapKind, TargetGap, TaskRewardConfig};
use advsim::discriminator::DiscriminatorConfig;
use advsim::hybrid::ParamFnInit;
use advsim::identify::{self, collect_target_data, IdentifyConfig};
use advsim::ppo::GaussianPolicy;
use advsim::rng::{self, Stream};

fn tiny() -> IdentifyConfig {
    IdentifyConfig {
        iterations: 3,
        episodes_per_iter: 3,
        param_fn: ParamFnInit { hidden: vec![4], ..Default::default() },
        value_hidden: vec![4],
        discriminator: DiscriminatorConfig { hidden: vec![4], ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn identification_is_reproducible() {
    let spec = EnvSpec::slider();
    let pi = GaussianPolicy::new(&spec, &[8], -0.5, &mut rng::stream(0, Stream::Init, 0)).unwrap();
    let target = make_target(&spec, &TargetGap::default_for(spec.kind, GapKind::Power)).unwrap();
    let reward = TaskRewardConfig::default_for(spec.kind);
    let ds = collect_target_data(&pi, &target, 4, 0.25, 9, Some(&reward)).unwrap();
    let again = collect_target_data(&pi, &target, 4, 0.25, 9, Some(&reward)).unwrap();
    assert_eq!(ds.trajectories, again.trajectories);

    let a = identify::identify(&ds, &pi, &spec, &tiny(), 5).unwrap();
    let b = identify::identify(&ds, &pi, &spec, &tiny(), 5).unwrap();
    let c = identify::identify(&ds, &pi, &spec, &tiny(), 6).unwrap();
    assert_eq!(a.param_fn, b.param_fn);
    assert_eq!(a.metrics.len(), b.metrics.len());
    assert_ne!(a.param_fn, c.param_fn);
}
