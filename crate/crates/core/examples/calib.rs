use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::SeedableRng;
use stabwave::fit::exp_decay_fit;
use stabwave::nlw::{linearize, reference_trajectory, Drive, Nonlinearity};
use stabwave::spectral::{DomainSpec, ModalState, SpectralBasis};
use stabwave::waveop::{solve_linear, Forcing, TimeGrid};
use std::f64::consts::PI;
use std::sync::Arc;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(16);
    let horizon: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(82.8);
    let mode: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let amps: Vec<f64> = args
        .get(4)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![2.0, 3.0, 4.0, 5.0]);
    let freqs: Vec<f64> = args
        .get(5)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| (0..11).map(|k| 1.2 + 0.05 * k as f64).collect());
    let dt = 1.0 / 320.0;
    let basis =
        Arc::new(SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap());
    let f = Nonlinearity::cubic();
    let grid = TimeGrid::span(0.0, horizon, dt).unwrap();
    let init = ModalState::zero(basis.clone());

    for &a in &amps {
        for &om in &freqs {
            let coeffs = DVector::from_fn(n, |j, _| if j == mode { a } else { 0.0 });
            let drive = Drive::profile(coeffs, move |t: f64| (om * t).sin());
            let (trace, report) =
                match reference_trajectory(&f, 0.1, &drive, &init, grid.clone(), 1e8) {
                    Ok(v) => v,
                    Err(e) => {
                        println!("a={a} om={om}: reference failed: {e}");
                        continue;
                    }
                };
            if report.stopped_early {
                println!("a={a} om={om}: reference escaped");
                continue;
            }
            let amp = (0..trace.grid.len)
                .map(|k| trace.state(k).h_norm(0.0))
                .fold(0.0, f64::max);
            let b = linearize(&f, &trace).unwrap();
            let mut rng = StdRng::seed_from_u64(17);
            let mut worst_fit = f64::INFINITY;
            let mut worst_tail = f64::INFINITY;
            for trial in 0..4 {
                let v0 = if trial == 0 {
                    ModalState::mode(basis.clone(), 0)
                } else {
                    ModalState::random_unit(basis.clone(), &mut rng, 1.0)
                };
                let run = match solve_linear(0.1, &b, Forcing::None, &v0, grid.clone(), 1e14) {
                    Ok(r) => r,
                    Err(_) => {
                        worst_fit = f64::NEG_INFINITY;
                        worst_tail = f64::NEG_INFINITY;
                        break;
                    }
                };
                let energies = run.energies();
                let len = run.grid.len;
                let samples: Vec<(f64, f64)> = (len / 4..len)
                    .map(|k| (run.grid.node(k), energies[k]))
                    .collect();
                let (_, rate) = exp_decay_fit(&samples, 1e-300);
                worst_fit = worst_fit.min(rate);
                let tail = (energies[len / 2] / energies[len - 1]).ln()
                    / (run.grid.node(len - 1) - run.grid.node(len / 2));
                worst_tail = worst_tail.min(tail);
            }
            println!(
                "a={a:4} om={om:5.2}: sup|u|={amp:6.2} sup2={:6.2} fit={worst_fit:+.4} tail={worst_tail:+.4}",
                report.sup_norm
            );
        }
    }
}
