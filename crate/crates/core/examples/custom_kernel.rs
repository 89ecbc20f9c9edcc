//! A user-supplied memory kernel: exponential fading on the support, zero
//! in the dead zone. Compares the memory term of two runs that differ only
//! in the insolation, before and after `delta`.

use ebmm::memory::{CustomKernel, KernelShape, MemoryKernel};
use ebmm::physics::{CoalbedoKind, CoalbedoSpec, EmissionSpec, Emissivity, InsolationSpec, MemoryResponseSpec};
use ebmm::{simulate, Grid, ModelParams, QProfile, Seasonal, SimulationOptions};

fn params(q: f64) -> ebmm::Result<ModelParams> {
    let kernel = CustomKernel::new("exp fade", |s, _x| (2.0 * s).exp()).with_derivative(|s, _x| 2.0 * (2.0 * s).exp());
    ModelParams::new(
        Grid::new(32, 0.5)?,
        InsolationSpec {
            q: QProfile::Constant { value: q },
            r: Seasonal::Cosine {
                mean: 1.0,
                amplitude: 0.1,
                period: 1.0,
            },
        },
        CoalbedoSpec {
            kind: CoalbedoKind::SellersSmooth,
            a_i: 0.4,
            a_f: 0.8,
            u_bar: 0.0,
            width: 2.0,
        },
        EmissionSpec::Sellers {
            epsilon: Emissivity::Constant { eps1: 1.0 },
        },
        MemoryResponseSpec {
            f_bound: 0.3,
            h_scale: 1.0,
        },
        MemoryKernel::new(1.0, 0.25, true, KernelShape::Custom(kernel))?,
    )
}

fn main() -> ebmm::Result<()> {
    let opts = SimulationOptions {
        record_memory: true,
        target_dt: 0.01,
        ..SimulationOptions::default()
    };
    let u0 = |s: f64, x: f64| 0.5 + 0.1 * s - 0.2 * x * x;
    let a = simulate(&params(1.0)?, u0, 0.6, &opts)?;
    let b = simulate(&params(1.5)?, u0, 0.6, &opts)?;
    println!("t      max |H_a - H_b|");
    for (k, (ha, hb)) in a.memory_terms.iter().zip(&b.memory_terms).enumerate().step_by(5) {
        let d = ha.iter().zip(hb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("{:<6.2} {d:.3e}", a.times[k]);
    }
    println!("(zero until t = delta = 0.25, then the runs' own histories enter)");
    Ok(())
}
