use arw_core::engine::{stabilize, strong_stabilize_iterative, OrderPolicy, Snapshot};
use arw_core::{make_box, Configuration, Params, SiteState, StabilizationMode, StackSource};
use proptest::prelude::*;

/// A small box with particles dropped on random sites; some of them asleep
/// when `sleepers` is set.
fn instance(sleepers: bool) -> impl Strategy<Value = Configuration> {
    (1usize..=3, 0usize..=3)
        .prop_flat_map(move |(d, n)| {
            let volume = (2 * n + 1).pow(d as u32);
            (Just((d, n)), prop::collection::vec((0..volume, any::<bool>()), 1..12))
        })
        .prop_map(move |((d, n), drops)| {
            let lattice = make_box(d, n).unwrap();
            let mut cfg = Configuration::empty(lattice.clone());
            for (i, asleep) in drops {
                let x = lattice.site_of(i);
                if sleepers && asleep && cfg.state_at(i) == SiteState::Empty {
                    cfg.set_state(&x, SiteState::Sleeping).unwrap();
                } else {
                    cfg.add_active(&x, 1).unwrap();
                }
            }
            cfg
        })
}

fn stacks(cfg: &Configuration, seed: u64, lambda: f64) -> StackSource {
    StackSource::new(seed, Params::new(cfg.lattice().dim(), lambda).unwrap())
}

fn modes(d: usize) -> [StabilizationMode; 3] {
    [
        StabilizationMode::True,
        StabilizationMode::weak_origin(d),
        StabilizationMode::strong_origin(d),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dense_index_roundtrip(d in 1usize..=4, n in 0usize..=4) {
        let lattice = make_box(d, n).unwrap();
        for i in 0..lattice.volume() {
            let x = lattice.site_of(i);
            prop_assert!(x.linf_norm() as usize <= n);
            prop_assert_eq!(lattice.index_of(&x), Some(i));
        }
    }

    #[test]
    fn particles_are_conserved_or_killed(cfg in instance(true), seed: u64, lambda in 0.1f64..5.0) {
        let src = stacks(&cfg, seed, lambda);
        for mode in modes(cfg.lattice().dim()) {
            let mut out = cfg.clone();
            stabilize(&mut out, &src, &mode, OrderPolicy::Fifo).unwrap();
            prop_assert_eq!(out.particles() + out.killed(), cfg.particles());
        }
    }

    #[test]
    fn toppling_order_is_irrelevant(cfg in instance(true), seed: u64) {
        let src = stacks(&cfg, seed, 1.0);
        for mode in modes(cfg.lattice().dim()) {
            let mut fifo = cfg.clone();
            let mut lifo = cfg.clone();
            stabilize(&mut fifo, &src, &mode, OrderPolicy::Fifo).unwrap();
            stabilize(&mut lifo, &src, &mode, OrderPolicy::Lifo).unwrap();
            prop_assert!(fifo.same_state(&lifo));
        }
    }

    #[test]
    fn stable_results_are_stable(cfg in instance(true), seed: u64) {
        let src = stacks(&cfg, seed, 1.0);
        let mut out = cfg.clone();
        stabilize(&mut out, &src, &StabilizationMode::True, OrderPolicy::Fifo).unwrap();
        prop_assert!(out.states().iter().all(|s| matches!(s, SiteState::Empty | SiteState::Sleeping)));

        let d = cfg.lattice().dim();
        let mut strong = cfg.clone();
        stabilize(&mut strong, &src, &StabilizationMode::strong_origin(d), OrderPolicy::Fifo).unwrap();
        prop_assert_eq!(strong.origin_state(), SiteState::Empty);
    }

    /// Weak topplings are legal for true stabilization, and true ones for
    /// strong stabilization, so the odometers are ordered.
    #[test]
    fn odometers_are_ordered_by_mode(cfg in instance(false), seed: u64) {
        let d = cfg.lattice().dim();
        let src = stacks(&cfg, seed, 1.0);
        let run = |mode: StabilizationMode| {
            let mut out = cfg.clone();
            stabilize(&mut out, &src, &mode, OrderPolicy::Fifo).unwrap();
            out
        };
        let weak = run(StabilizationMode::weak_origin(d));
        let truly = run(StabilizationMode::True);
        let strong = run(StabilizationMode::strong_origin(d));
        prop_assert!(truly.odometer().dominates(weak.odometer()));
        prop_assert!(strong.odometer().dominates(truly.odometer()));
    }

    /// A larger box only adds topplings at the sites both boxes share.
    #[test]
    fn odometer_grows_with_the_box(cfg in instance(true), seed: u64) {
        let small = cfg.lattice().clone();
        let big = make_box(small.dim(), small.radius() + 1).unwrap();
        let mut wide = Configuration::empty(big.clone());
        for (i, s) in cfg.states().iter().enumerate() {
            if *s != SiteState::Empty {
                wide.set_state(&small.site_of(i), *s).unwrap();
            }
        }
        let src = stacks(&cfg, seed, 1.0);
        let mut a = cfg.clone();
        stabilize(&mut a, &src, &StabilizationMode::True, OrderPolicy::Fifo).unwrap();
        stabilize(&mut wide, &src, &StabilizationMode::True, OrderPolicy::Fifo).unwrap();
        for (i, &m) in a.odometer().as_slice().iter().enumerate() {
            prop_assert!(wide.odometer().get(&small.site_of(i)).unwrap() >= m);
        }
    }

    #[test]
    fn chances_count_jump_outs(cfg in instance(false), seed: u64, lambda in 0.2f64..4.0) {
        let src = stacks(&cfg, seed, lambda);
        let rec = strong_stabilize_iterative(&cfg, &src).unwrap();
        prop_assert_eq!(rec.ach, rec.ch.saturating_sub(1));
        prop_assert_eq!(rec.sleep_trials.len() as u64, rec.ch);
        prop_assert_eq!(rec.final_config.origin_state(), SiteState::Empty);
        // After the pre-step the origin holds at most one active particle; if
        // it holds one, at least one jump-out happens.
        let mut pre = cfg.clone();
        let d = cfg.lattice().dim();
        stabilize(&mut pre, &src, &StabilizationMode::weak_origin(d), OrderPolicy::Fifo).unwrap();
        if pre.origin_state() != SiteState::Empty {
            prop_assert!(rec.ch >= 1);
        } else {
            prop_assert_eq!(rec.ch, 0);
        }
    }

    #[test]
    fn snapshots_roundtrip(cfg in instance(true), seed: u64) {
        let mut out = cfg.clone();
        stabilize(&mut out, &stacks(&cfg, seed, 1.0), &StabilizationMode::True, OrderPolicy::Fifo).unwrap();
        for c in [&cfg, &out] {
            let back = Snapshot::from_json(&Snapshot::from_configuration(c, Some(seed)).to_json())
                .unwrap()
                .to_configuration()
                .unwrap();
            prop_assert!(back.same_state(c));
            prop_assert_eq!(back.killed(), c.killed());
        }
    }
}
