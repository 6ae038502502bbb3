use kernel_observer::coupled::{CoupledState, CoupledSystem};
use kernel_observer::grid::{
    hs_norm, l2_norm, operator_norm, CircleGrid, FieldVector, KernelMatrix, PowerIteration,
};
use kernel_observer::integrator::{integrate, StepControl};
use kernel_observer::observer::{
    estimation_errors, gain_condition, lyapunov_derivative, observer_rhs, ObserverGains,
    ObserverState,
};
use kernel_observer::plant::{
    dissipativity_margin, plant_jvp, plant_rhs, Activation, ActivationTable, InputSignal,
    PlantParams, PlantState,
};
use proptest::prelude::*;

const N: usize = 12;

fn field(values: Vec<f64>) -> FieldVector {
    FieldVector::new(values).unwrap()
}

fn kernel(n: usize, entries: Vec<f64>) -> KernelMatrix {
    KernelMatrix::new(n, entries).unwrap()
}

fn fields(n: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-range..range, n)
}

/// A plant with `tau2 = 2` whose gain condition holds for `beta = 10`.
fn slow_measured_plant(grid: &CircleGrid) -> PlantParams {
    PlantParams::gaussian(
        grid,
        1.0,
        2.0,
        [0.3, 1.5, -1.2, 0.8],
        1.0,
        Activation::tanh(),
        Activation::logistic(),
    )
    .unwrap()
}

fn activation_samples() -> impl Iterator<Item = f64> {
    (0..1_000_000).map(|k| -50.0 + 100.0 * k as f64 / 999_999.0)
}

#[test]
fn activations_respect_their_bound_and_lipschitz_constant() {
    let table =
        ActivationTable::new(vec![(-2.0, -1.0), (0.0, 0.5), (1.0, 0.7), (3.0, 1.2)]).unwrap();
    for s in [
        Activation::tanh(),
        Activation::logistic(),
        Activation::table(table, 0.75, 1.2).unwrap(),
    ] {
        let (l, b) = (s.lipschitz(), s.bound());
        let mut prev: Option<(f64, f64)> = None;
        for z in activation_samples() {
            let v = s.eval(z);
            assert!(v.abs() <= b, "{:?}: |S({z})| = {} > {b}", s.kind(), v.abs());
            assert!(
                s.derivative(z).abs() <= l + 1e-15,
                "{:?}: S'({z}) > {l}",
                s.kind()
            );
            if let Some((zp, vp)) = prev {
                assert!((v - vp).abs() <= l * (z - zp) * (1.0 + 1e-9));
            }
            prev = Some((z, v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_product_matches_central_differences(
        z1 in fields(N, 3.0), z2 in fields(N, 3.0), d1 in fields(N, 1.0), d2 in fields(N, 1.0)
    ) {
        let grid = CircleGrid::unit_circle(N).unwrap();
        let p = slow_measured_plant(&grid);
        let u = InputSignal::Zero;
        let state = PlantState { z1: field(z1.clone()), z2: field(z2.clone()) };
        let dir = PlantState { z1: field(d1.clone()), z2: field(d2.clone()) };
        let jvp = plant_jvp(&state, &dir, &p, &grid).unwrap();
        let h = 1e-5;
        let shifted = |sign: f64| {
            let s = PlantState {
                z1: field(z1.iter().zip(&d1).map(|(a, b)| a + sign * h * b).collect()),
                z2: field(z2.iter().zip(&d2).map(|(a, b)| a + sign * h * b).collect()),
            };
            plant_rhs(&s, 0.0, &p, &u, &u, &grid).unwrap()
        };
        let (fp, fm) = (shifted(1.0), shifted(-1.0));
        let pairs = [(&jvp.z1, &fp.z1, &fm.z1), (&jvp.z2, &fp.z2, &fm.z2)];
        for (j, a, b) in pairs {
            for i in 0..N {
                let fd = (a.values()[i] - b.values()[i]) / (2.0 * h);
                prop_assert!((fd - j.values()[i]).abs() <= 1e-5 * (1.0 + j.values()[i].abs()));
            }
        }
    }

    #[test]
    fn update_law_has_rank_at_most_one(
        z2 in fields(N, 3.0), zh1 in fields(N, 3.0), zh2 in fields(N, 3.0),
        w21 in fields(N * N, 2.0), w22 in fields(N * N, 2.0), t in 0.0f64..50.0
    ) {
        let grid = CircleGrid::unit_circle(N).unwrap();
        let p = slow_measured_plant(&grid);
        let gains = ObserverGains::new(10.0, 3.0, 7.0).unwrap();
        let obs = ObserverState {
            zhat1: field(zh1),
            zhat2: field(zh2),
            what21: kernel(N, w21),
            what22: kernel(N, w22),
        };
        let u1 = InputSignal::sinusoidal(2.0, 1.0);
        let u2 = InputSignal::sinusoidal(2.0, 2.0);
        let d = observer_rhs(&obs, &field(z2), t, &p.known(), &gains, &u1, &u2, &grid).unwrap();
        for w in [&d.what21, &d.what22] {
            let scale = w.entries().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..N {
                for k in (i + 1)..N {
                    for j in 0..N {
                        for l in (j + 1)..N {
                            let minor = w.get(i, j) * w.get(k, l) - w.get(i, l) * w.get(k, j);
                            prop_assert!(minor.abs() <= 1e-12 * scale * scale);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn lyapunov_value_never_increases_under_the_gain_condition(
        z1 in fields(N, 3.0), z2 in fields(N, 3.0), zh1 in fields(N, 3.0), zh2 in fields(N, 3.0),
        w21 in fields(N * N, 4.0), w22 in fields(N * N, 4.0), t in 0.0f64..50.0,
        amplitude in 0.0f64..20.0
    ) {
        let grid = CircleGrid::unit_circle(N).unwrap();
        let p = slow_measured_plant(&grid);
        let gains = ObserverGains::new(10.0, 3.0, 7.0).unwrap();
        prop_assert!(gain_condition(&p, &gains, &grid, PowerIteration::default()).unwrap().holds);
        let u1 = InputSignal::sinusoidal(amplitude, 1.0);
        let u2 = InputSignal::sinusoidal(amplitude, 2.0);
        let plant = PlantState { z1: field(z1), z2: field(z2) };
        let obs = ObserverState {
            zhat1: field(zh1),
            zhat2: field(zh2),
            what21: kernel(N, w21),
            what22: kernel(N, w22),
        };
        let dplant = plant_rhs(&plant, t, &p, &u1, &u2, &grid).unwrap();
        let dobs = observer_rhs(&obs, &plant.z2, t, &p.known(), &gains, &u1, &u2, &grid).unwrap();
        let dv = lyapunov_derivative(&plant, &dplant, &obs, &dobs, &p, &gains, &grid).unwrap();
        let v = estimation_errors(&plant, &obs, &p, &gains, t, &grid).unwrap().lyapunov;
        prop_assert!(dv <= 1e-10 * (1.0 + v), "dV/dt = {dv} at V = {v}");
    }
}

fn gap_norm(a: &[f64], b: &[f64], grid: &CircleGrid) -> f64 {
    l2_norm(&field(a.iter().zip(b).map(|(x, y)| x - y).collect()), grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// With `W21 = 0` the measured population does not see the unmeasured
    /// one, so two solutions that differ only in `z1(0)` share `z2` and
    /// their `z1` difference has to contract at the dissipativity rate.
    #[test]
    fn unmeasured_population_contracts(
        omega11 in -1.5f64..1.5, sigma in 0.3f64..5.0, tau1 in 0.5f64..2.0,
        a in fields(24, 3.0), b in fields(24, 3.0)
    ) {
        let grid = CircleGrid::unit_circle(24).unwrap();
        let p = PlantParams::gaussian(
            &grid, tau1, 1.0, [omega11, 1.0, 0.0, 0.7], sigma, Activation::tanh(), Activation::tanh(),
        )
        .unwrap();
        let alpha = dissipativity_margin(&p, &grid, PowerIteration::default()).unwrap().alpha;
        prop_assume!(alpha.is_some());
        let alpha = alpha.unwrap();
        let u1 = InputSignal::sinusoidal(3.0, 1.0);
        let u2 = InputSignal::sinusoidal(3.0, 0.5);
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            let s = PlantState { z1: field(y[..24].to_vec()), z2: field(y[24..].to_vec()) };
            let d = plant_rhs(&s, t, &p, &u1, &u2, &grid).unwrap();
            dy[..24].copy_from_slice(d.z1.values());
            dy[24..].copy_from_slice(d.z2.values());
        };
        let samples: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
        let ctl = StepControl::with_tolerances(1e-10, 1e-12);
        let run = |z1: &[f64]| {
            let y0: Vec<f64> = z1.iter().copied().chain(std::iter::repeat_n(0.5, 24)).collect();
            integrate(&rhs, &y0, 0.0, 5.0, &samples, &ctl).unwrap()
        };
        let (ta, tb) = (run(&a), run(&b));
        let gap0 = gap_norm(&a, &b, &grid);
        for ((t, ya), yb) in ta.times.iter().zip(&ta.states).zip(&tb.states) {
            let gap = gap_norm(&ya[..24], &yb[..24], &grid);
            let bound = (-0.95 * alpha * t).exp() * gap0;
            prop_assert!(gap <= bound * (1.0 + 1e-6) + 1e-9, "t {t}: {gap} > {bound}");
            prop_assert!(gap_norm(&ya[24..], &yb[24..], &grid) <= 1e-8);
        }
    }

    /// The unmeasured-state error of the observer obeys the same
    /// contraction, whatever the kernel estimates are doing.
    #[test]
    fn unmeasured_estimate_error_decays_autonomously(
        z0 in fields(24, 2.0), zh0 in fields(24, 2.0), w0 in fields(24 * 24, 1.0)
    ) {
        let grid = CircleGrid::unit_circle(24).unwrap();
        let p = slow_measured_plant(&grid);
        let alpha = dissipativity_margin(&p, &grid, PowerIteration::default()).unwrap().alpha.unwrap();
        let gains = ObserverGains::new(10.0, 3.0, 7.0).unwrap();
        let sys = CoupledSystem::new(
            grid.clone(), p, gains,
            InputSignal::sinusoidal(5.0, 1.0), InputSignal::sinusoidal(5.0, 2.0),
        )
        .unwrap();
        let y0 = CoupledState {
            plant: PlantState { z1: field(z0), z2: FieldVector::constant(&grid, 1.0) },
            observer: ObserverState {
                zhat1: field(zh0),
                zhat2: FieldVector::zeros(24),
                what21: kernel(24, w0),
                what22: KernelMatrix::zeros(24),
            },
        }
        .flatten();
        let samples: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
        let traj = integrate(
            &|t, y: &[f64], dy: &mut [f64]| sys.rhs(t, y, dy),
            &y0, 0.0, 4.0, &samples, &StepControl::with_tolerances(1e-10, 1e-12),
        )
        .unwrap();
        let e0 = sys.errors(0.0, &traj.states[0]).unwrap().e_z1;
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let e = sys.errors(*t, y).unwrap().e_z1;
            let bound = (-0.95 * alpha * t).exp() * e0;
            prop_assert!(e <= bound * (1.0 + 1e-6) + 1e-9, "t {t}: {e} > {bound}");
        }
    }
}

#[test]
fn trajectories_stay_within_the_a_priori_bounds() {
    let grid = CircleGrid::unit_circle(24).unwrap();
    let p = slow_measured_plant(&grid);
    let gains = ObserverGains::new(10.0, 3.0, 7.0).unwrap();
    let amplitude = 5.0;
    let sys = CoupledSystem::new(
        grid.clone(),
        p.clone(),
        gains,
        InputSignal::sinusoidal(amplitude, 1.0),
        InputSignal::sinusoidal(amplitude, 2.0),
    )
    .unwrap();
    let y0 = CoupledState {
        plant: PlantState::constant(&grid, 1.0, 1.0),
        observer: ObserverState::zeros(&grid),
    }
    .flatten();
    let samples: Vec<f64> = (0..=60).map(|k| 0.5 * k as f64).collect();
    let traj = integrate(
        &|t, y: &[f64], dy: &mut [f64]| sys.rhs(t, y, dy),
        &y0,
        0.0,
        30.0,
        &samples,
        &StepControl::default(),
    )
    .unwrap();

    // tau z' = -z + f with ||f|| <= F keeps ||z(t)|| <= ||z(0)|| + F, and
    // ||u|| <= A sqrt(L), ||W S(z)|| <= ||W||_op * bound * sqrt(L).
    let op = |w| operator_norm(w, &grid, PowerIteration::default()).unwrap();
    let sqrt_l = grid.length().sqrt();
    let z0 = l2_norm(&FieldVector::constant(&grid, 1.0), &grid).unwrap();
    let (b1, b2) = (p.s1.bound(), p.s2.bound());
    let bound1 = z0 + (amplitude + op(&p.w11) * b1 + op(&p.w12) * b2) * sqrt_l;
    let bound2 = z0 + (amplitude + op(&p.w21) * b1 + op(&p.w22) * b2) * sqrt_l;

    let v0 = sys.errors(0.0, &y0).unwrap().lyapunov;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let s = CoupledState::unflatten(y, 24).unwrap();
        let n1 = l2_norm(&s.plant.z1, &grid).unwrap();
        let n2 = l2_norm(&s.plant.z2, &grid).unwrap();
        assert!(
            n1 <= bound1 && n2 <= bound2,
            "t {t}: {n1} / {bound1}, {n2} / {bound2}"
        );

        let e = sys.errors(*t, y).unwrap();
        let slack = 1.0 + 1e-6;
        assert!(e.lyapunov <= v0 * slack);
        let reach = v0.sqrt() * slack;
        assert!(l2_norm(&s.observer.zhat1, &grid).unwrap() <= n1 + reach);
        assert!(l2_norm(&s.observer.zhat2, &grid).unwrap() <= n2 + reach);
        let hs = |w| hs_norm(w, &grid).unwrap();
        assert!(hs(&s.observer.what21) <= hs(&p.w21) + (3.0 * 2.0 * v0).sqrt() * slack);
        assert!(hs(&s.observer.what22) <= hs(&p.w22) + (7.0 * 2.0 * v0).sqrt() * slack);
    }
}
