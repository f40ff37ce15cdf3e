//! Structural identities of the shaped closed loops, checked pointwise on
//! seeded random states: the matching identity, shaped-energy derivative
//! consistency, law/target-field agreement and the dissipation balance.

use std::sync::Arc;

use phem_core::analysis::shaped_dissipation;
use phem_core::controller::{ClosedLoopShape, Controller, LawKind};
use phem_core::matrix::{dot, norm2, Matrix};
use phem_core::plant::{EMPlant, MaglevParams, MemsParams, State};
use phem_core::target::{DesiredTarget, ReferenceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mems() -> Arc<EMPlant> {
    Arc::new(EMPlant::mems_optical_switch(MemsParams::default()).unwrap())
}

fn maglev() -> Arc<EMPlant> {
    Arc::new(EMPlant::maglev(MaglevParams::default()).unwrap())
}

fn random_state(rng: &mut ChaCha8Rng, scales: &[f64; 3]) -> State {
    let r = |rng: &mut ChaCha8Rng, s: f64| s * (2.0 * rng.gen::<f64>() - 1.0);
    State::new(
        vec![r(rng, scales[0])],
        vec![r(rng, scales[1])],
        vec![r(rng, scales[2])],
    )
}

fn controllers() -> Vec<(Controller, [f64; 3], f64)> {
    let mut out = Vec::new();
    // xe-shaped regulation and tracking on the optical switch
    let plant = mems();
    let shape = |d: f64| {
        ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(0.0),
            Matrix::scalar(d),
            Matrix::scalar(0.01),
        )
        .unwrap()
    };
    let eq = DesiredTarget::equilibrium(plant.clone(), vec![3e-5]).unwrap();
    out.push((
        Controller::with_builtin_shaping(
            LawKind::RegulationXe,
            plant.clone(),
            shape(-1e-4),
            eq.clone(),
            1.0,
        )
        .unwrap(),
        [2e-5, 1e-12, 3e-11],
        0.0,
    ));
    let trk = DesiredTarget::trajectory(
        plant.clone(),
        ReferenceKind::Sinusoid { offset: 0.05, amplitude: 0.05, omega: 30.0, phase: 0.0 },
    )
    .unwrap();
    out.push((
        Controller::with_builtin_shaping(LawKind::TrackingXe, plant.clone(), shape(-0.4), trk, 1.0)
            .unwrap(),
        [0.03, 3e-9, 3e-6],
        0.13,
    ));
    // z-shaped regulation and tracking on the levitation device
    let plant = maglev();
    let p = MaglevParams::default();
    let gamma = 1.0 / (2.0 * p.k);
    let zshape = |d: f64, rb: f64| {
        ClosedLoopShape::from_r_e_bar(
            &plant,
            Matrix::scalar(gamma),
            Matrix::scalar(d),
            Matrix::scalar(rb),
        )
        .unwrap()
    };
    let eq = DesiredTarget::equilibrium(plant.clone(), vec![0.0]).unwrap();
    out.push((
        Controller::with_builtin_shaping(
            LawKind::RegulationZ,
            plant.clone(),
            zshape(-0.05, 2.82),
            eq,
            20.0,
        )
        .unwrap(),
        [0.002, 0.01, 0.8],
        0.0,
    ));
    let trk = DesiredTarget::trajectory(
        plant.clone(),
        ReferenceKind::Sinusoid { offset: 0.002, amplitude: 0.001, omega: 1.0, phase: 0.0 },
    )
    .unwrap();
    out.push((
        Controller::with_builtin_shaping(LawKind::TrackingZ, plant.clone(), zshape(-1.0, 2.82), trk, 20.0)
            .unwrap(),
        [0.002, 0.01, 0.8],
        0.7,
    ));
    out
}

#[test]
fn law_reproduces_the_target_structure() {
    // closing the loop with each law gives exactly F_d ∇H_d
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (ctrl, scales, t) in controllers() {
        for trial in 0..100 {
            let eta = random_state(&mut rng, &scales);
            if ctrl.plant().check_bounds(&eta.q).is_err() {
                continue;
            }
            let actual = ctrl.closed_loop_field(&eta, t).unwrap();
            let want = ctrl.target_field(&eta, t).unwrap();
            let scale = norm2(&want).max(norm2(&actual)).max(1e-300);
            let gap: f64 =
                actual.iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(
                gap < 1e-9 * scale,
                "{:?} trial {trial}: field gap {gap:.3e} vs scale {scale:.3e}",
                ctrl.kind
            );
        }
    }
}

#[test]
fn matching_identity_for_z_laws() {
    // -∇_q H_d + Γ ∇_{x_e} H_d = -∇_q H on random states
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (ctrl, scales, t) in controllers() {
        if !matches!(ctrl.kind, LawKind::RegulationZ | LawKind::TrackingZ) {
            continue;
        }
        let plant = ctrl.plant();
        for trial in 0..100 {
            let eta = random_state(&mut rng, &scales);
            if plant.check_bounds(&eta.q).is_err() {
                continue;
            }
            let gd = ctrl.energy().grad(&eta, t).unwrap();
            let g = plant.grad_hamiltonian(&eta).unwrap();
            let n_m = plant.n_m();
            let gx = &gd[2 * n_m..];
            let corr = ctrl.shape.gamma.matvec(gx);
            let mut resid = 0.0f64;
            let mut scale = 0.0f64;
            for i in 0..n_m {
                let lhs = -gd[i] + corr[i];
                resid = resid.max((lhs + g[i]).abs());
                scale = scale.max(gd[i].abs()).max(g[i].abs()).max(corr[i].abs());
            }
            assert!(
                resid <= 1e-9 * scale.max(1e-300),
                "{:?} trial {trial}: matching residual {resid:.3e} vs {scale:.3e}",
                ctrl.kind
            );
        }
    }
}

#[test]
fn shaped_energy_derivatives_are_consistent() {
    // analytic gradient/Hessian of H_d match finite differences of the value
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (ctrl, scales, t) in controllers() {
        let plant = ctrl.plant();
        let energy = ctrl.energy();
        let mut checked = 0;
        for _ in 0..40 {
            let eta = random_state(&mut rng, &scales);
            if plant.check_bounds(&eta.q).is_err() {
                continue;
            }
            checked += 1;
            let flat = eta.to_vec();
            let g = energy.grad(&eta, t).unwrap();
            let hess = energy.hessian(&eta, t).unwrap();
            for i in 0..plant.dim() {
                let h = 1e-6 * (flat[i].abs() + scales[i.min(2)]);
                let mut fp = flat.clone();
                let mut fm = flat.clone();
                fp[i] += h;
                fm[i] -= h;
                let ep = State::from_flat(1, 1, &fp);
                let em = State::from_flat(1, 1, &fm);
                let vp = energy.value(&ep, t).unwrap();
                let vm = energy.value(&em, t).unwrap();
                let fd = (vp - vm) * 0.5 / h;
                let scale = g[i].abs().max(fd.abs()).max(1e-300);
                // the difference quotient cannot resolve below the value's
                // floating-point floor
                let fd_noise = 256.0 * f64::EPSILON * vp.abs().max(vm.abs()) / h;
                assert!(
                    (g[i] - fd).abs() / scale < 2e-6 || (g[i] - fd).abs() < fd_noise,
                    "{:?} grad[{i}]: {} vs fd {}",
                    ctrl.kind,
                    g[i],
                    fd
                );
                let gp = energy.grad(&ep, t).unwrap();
                let gm = energy.grad(&em, t).unwrap();
                for j in 0..plant.dim() {
                    let fdh = (gp[j] - gm[j]) * 0.5 / h;
                    let scale = hess[(j, i)].abs().max(fdh.abs()).max(1e-300);
                    let rel = (hess[(j, i)] - fdh).abs() / scale;
                    // zero-by-structure entries only need absolute smallness
                    let absol = (hess[(j, i)] - fdh).abs()
                        <= 1e-6 * hess.norm_max().max(1.0);
                    assert!(
                        rel < 2e-6 || absol,
                        "{:?} hess[{j}][{i}]: {} vs fd {}",
                        ctrl.kind,
                        hess[(j, i)],
                        fdh
                    );
                }
            }
        }
        assert!(checked > 10, "{:?}: too few in-domain samples", ctrl.kind);
    }
}

#[test]
fn energy_balance_matches_shaped_dissipation() {
    // dH_d/dt along the loop equals -Z' B_T Z with Z = [∇_p H_d; ∇_{x_e} H_d]
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (ctrl, scales, t) in controllers() {
        let plant = ctrl.plant();
        let n_m = plant.n_m();
        let bt = shaped_dissipation(&plant.r_m, &ctrl.shape.d_d, &ctrl.shape.r_e_bar);
        // the balance holds for time-frozen shaped energies: regulation laws
        if ctrl.kind.is_tracking() {
            continue;
        }
        for trial in 0..100 {
            let eta = random_state(&mut rng, &scales);
            if plant.check_bounds(&eta.q).is_err() {
                continue;
            }
            let gd = ctrl.energy().grad(&eta, t).unwrap();
            let field = ctrl.closed_loop_field(&eta, t).unwrap();
            let hdot = dot(&gd, &field);
            let z: Vec<f64> = gd[n_m..].to_vec();
            let quad = bt.quad_form(&z, &z);
            let scale = hdot.abs().max(quad.abs()).max(1e-300);
            assert!(
                (hdot + quad).abs() < 1e-8 * scale,
                "{:?} trial {trial}: dH_d {hdot:.6e} vs -Z'BZ {:.6e}",
                ctrl.kind,
                -quad
            );
        }
    }
}

#[test]
fn open_loop_passivity_identity() {
    // dH/dt - u'y <= 0 pointwise (equality minus the natural dissipation)
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (plant, scales) in
        [(mems(), [2e-5, 1e-12, 3e-11]), (maglev(), [0.002, 0.01, 0.8])]
    {
        for _ in 0..100 {
            let eta = random_state(&mut rng, &scales);
            if plant.check_bounds(&eta.q).is_err() {
                continue;
            }
            let u = vec![2.0 * rng.gen::<f64>() - 1.0];
            let rate = plant.energy_rate(&eta, &u).unwrap();
            let y = plant.output(&eta).unwrap();
            let supply = dot(&u, &y);
            let scale = rate.abs().max(supply.abs()).max(1e-300);
            assert!(rate - supply <= 1e-9 * scale, "rate {rate} supply {supply}");
        }
    }
}

#[test]
fn passivity_along_a_simulated_run() {
    use phem_core::sim::{simulate, IntegratorConfig, LoopSpec, Method};
    let plant = mems();
    let q_d = vec![3e-5];
    let x_ed = plant.equilibrium_electrical_state(&q_d).unwrap();
    let u_bar = plant.equilibrium_input(&q_d, &x_ed).unwrap()[0];
    let wobble = move |t: f64| vec![u_bar * (1.0 + 0.5 * (1000.0 * t).sin())];
    let eta0 = State::new(q_d, vec![0.0], x_ed);
    let mut cfg = IntegratorConfig::new(Method::ImplicitOneStep, 2e-3);
    cfg.samples = 200;
    let rec = simulate(&plant, &LoopSpec::OpenTimeFn(&wobble), &eta0, &cfg, None).unwrap();
    assert!(rec.completed());
    for k in 0..rec.times.len() {
        let eta = rec.state_at(k);
        let u = &rec.inputs[k];
        let rate = plant.energy_rate(&eta, u).unwrap();
        let y = plant.output(&eta).unwrap();
        let scale = rate.abs().max(dot(u, &y).abs()).max(1e-300);
        assert!(rate - dot(u, &y) <= 1e-9 * scale);
    }
}

#[test]
fn coupled_damping_does_not_change_regulation_verdicts() {
    use phem_core::contraction::Region;
    use phem_core::verify::{verify_law, VerifyOptions};
    let plant = mems();
    let target = DesiredTarget::equilibrium(plant.clone(), vec![3e-5]).unwrap();
    let region = Region::Box {
        bounds: vec![(2.4e-5, 3.6e-5), (-2e-10, 2e-10), (3.5e-11, 5.4e-11)],
        points_per_dim: 5,
    };
    let verdicts: Vec<Vec<String>> = [0.0, -1e-4]
        .iter()
        .map(|&d| {
            let shape = ClosedLoopShape::from_r_e_bar(
                &plant,
                Matrix::scalar(0.0),
                Matrix::scalar(d),
                Matrix::scalar(0.01),
            )
            .unwrap();
            let ctrl = Controller::with_builtin_shaping(
                LawKind::RegulationXe,
                plant.clone(),
                shape,
                target.clone(),
                1.0,
            )
            .unwrap();
            let report = verify_law(&ctrl, &region, &VerifyOptions::default()).unwrap();
            report.failed_names()
        })
        .collect();
    assert_eq!(verdicts[0], verdicts[1]);
    assert!(verdicts[0].is_empty());
}
