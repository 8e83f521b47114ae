use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::SeedableRng;
use stabwave::control::{
    algebraic_riccati_oracle, riccati_value, shifted_matrices, ControlSpace, RiccatiOptions,
};
use stabwave::fit::exp_decay_fit;
use stabwave::nlw::{
    closed_loop, linearize, open_loop_baseline, reference_trajectory, ClosedLoopOptions, Drive,
    Nonlinearity,
};
use stabwave::observability::{select_m, GramianAssembly};
use stabwave::spectral::{CutoffField, DomainSpec, ModalState, SpectralBasis};
use stabwave::waveop::{solve_linear, Forcing, PotentialField, TimeGrid};
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let n = 32usize;
    let domain = DomainSpec::interval(PI, -1.0, 0.4).unwrap();
    let t_min = domain.t_min();
    let t_interval = 2.5 * t_min;
    let horizon = 4.0 * t_interval;
    println!("T_min = {t_min:.4}, T = {t_interval:.4}, horizon = {horizon:.4}");
    let basis = Arc::new(SpectralBasis::build(domain, n).unwrap());
    let chi = CutoffField::collar(basis.clone());
    let f = Nonlinearity::cubic();
    let gamma = 0.1;
    let (a, om) = (4.0f64, 1.4f64);

    let t0 = Instant::now();
    let coeffs = DVector::from_fn(n, |j, _| if j == 1 { a } else { 0.0 });
    let drive = Drive::profile(coeffs, move |t: f64| (om * t).sin());
    let init = ModalState::zero(basis.clone());
    let ref_grid = TimeGrid::span(0.0, horizon, 1.0 / 320.0).unwrap();
    let (reference, report) =
        reference_trajectory(&f, gamma, &drive, &init, ref_grid.clone(), 1e8).unwrap();
    println!(
        "reference: {:.2?}, sup2 = {:.3}, growth = {}, nodes = {}",
        t0.elapsed(),
        report.sup_norm,
        report.growth_detected,
        reference.grid.len
    );

    let t0 = Instant::now();
    let b = linearize(&f, &reference).unwrap();
    println!("linearize: {:.2?}, bound = {:.3}", t0.elapsed(), b.bound());

    // Open-loop contraction check at full mode count.
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(17);
    for trial in 0..3 {
        let v0 = if trial == 0 {
            ModalState::mode(basis.clone(), 0)
        } else {
            ModalState::random_unit(basis.clone(), &mut rng, 1.0)
        };
        let run = solve_linear(gamma, &b, Forcing::None, &v0, ref_grid.clone(), 1e14).unwrap();
        let energies = run.energies();
        let len = run.grid.len;
        let samples: Vec<(f64, f64)> = (len / 4..len)
            .map(|k| (run.grid.node(k), energies[k]))
            .collect();
        let (_, rate) = exp_decay_fit(&samples, 1e-300);
        println!("  open-loop trial {trial}: rate = {rate:+.4}");
    }
    println!("open-loop probes: {:.2?}", t0.elapsed());

    // Observability with the frozen potential.
    let t0 = Instant::now();
    let asm = GramianAssembly::assemble(&b, &chi, t_interval, 0.5, gamma, basis.default_dt())
        .unwrap();
    let rep = asm.report();
    println!(
        "gramian(b): {:.2?}, lambda_min = {:.3e}, M6 = {:.3e}",
        t0.elapsed(),
        rep.lambda_min,
        rep.m6
    );
    let t0 = Instant::now();
    let sel = select_m(&asm, 15, 2.0).unwrap();
    println!(
        "select_m: {:.2?}, m = {}, truncated = {:.3e}",
        t0.elapsed(),
        sel.m,
        sel.report.truncated_constant
    );

    let space = ControlSpace::new(&chi, sel.m, 0.5).unwrap();
    // Terminal seed: stationary value of the cycle-averaged potential.
    let t0 = Instant::now();
    let period = PI / om;
    let b_mean = b.averaged(horizon - period, horizon, 64).unwrap();
    let (am, bm, cm) = shifted_matrices(&space, &b_mean, 0.0, gamma, 0.08);
    let p_inf = algebraic_riccati_oracle(&am, &bm, &cm).unwrap();
    println!("mean ARE: {:.2?}, |P| = {:.3e}", t0.elapsed(), p_inf.norm());
    let t0 = Instant::now();
    let mut opts = RiccatiOptions::new(0.08, horizon, 0.2);
    opts.riccati_tol = 1e-5;
    opts.max_extensions = 6;
    opts.terminal = Some(p_inf);
    let law = riccati_value(&b, &space, gamma, &opts).unwrap();
    println!(
        "riccati: {:.2?}, gain_bound = {:.3}, growth_const = {:.3}, extensions = {}",
        t0.elapsed(),
        law.gain_bound,
        law.value_growth_constant,
        law.extensions.len()
    );

    // One closed-loop run and its open-loop companion.
    let run_grid = TimeGrid::span(0.0, horizon, 1.0 / 160.0).unwrap();
    let mut pert = ModalState::random_unit(basis.clone(), &mut rng, 1.0);
    pert.scale(0.1);
    let cl_opts = ClosedLoopOptions::new(2.0 * t_interval);
    let t0 = Instant::now();
    let closed = closed_loop(
        &f, gamma, &drive, &reference, &law, &space, &pert, run_grid.clone(), &cl_opts,
    )
    .unwrap();
    println!(
        "closed loop: {:.2?}, beta_fit = {:.4}, success = {}, E_end = {:.3e}",
        t0.elapsed(),
        closed.fit_rate,
        closed.success,
        closed.diff_energy.last().unwrap()
    );
    let t0 = Instant::now();
    let open = open_loop_baseline(
        &f, gamma, &drive, &reference, &law, &space, &pert, run_grid, &cl_opts,
    )
    .unwrap();
    let open_end = if open.stopped_early {
        f64::INFINITY
    } else {
        *open.diff_energy.last().unwrap()
    };
    println!(
        "open loop: {:.2?}, stopped = {}, E_end = {:.3e}",
        t0.elapsed(),
        open.stopped_early,
        open_end
    );

    // Gramian for the free operator too (criterion pairing).
    let t0 = Instant::now();
    let zero = PotentialField::zero(basis.clone());
    let rep0 = GramianAssembly::assemble(&zero, &chi, t_interval, 0.5, gamma, basis.default_dt())
        .unwrap()
        .report();
    println!(
        "gramian(0): {:.2?}, lambda_min = {:.3e}",
        t0.elapsed(),
        rep0.lambda_min
    );
}
