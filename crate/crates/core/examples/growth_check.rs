//! Samples the structural growth conditions for several kernels, and shows
//! the report for a tabulated kernel whose declared exponents are wrong.

use fracobs::kernel::{log_grid, measure_growth, SamplePlan};
use fracobs::{BoundedShape, KernelSpec};

fn main() -> fracobs::Result<()> {
    let plan = SamplePlan::default_1d();
    let kernels = [
        ("power p = 1.5", KernelSpec::power(1.5, 1.0)?),
        ("double phase (2, 4)", KernelSpec::double_phase(2.0, 4.0, 1.0, 0.5)?),
        (
            "bounded saturating",
            KernelSpec::bounded(BoundedShape::Saturating { lo: 0.5.into(), hi: 2.0.into() }, 0.5, 2.0)?,
        ),
    ];
    let table = KernelSpec::tabulated(&[(0.5, 1.0), (1.0, 2.0), (2.0, 2.5), (4.0, 2.5)])?;
    // tables are only sampled inside their range
    let table_plan = SamplePlan {
        pairs: plan.pairs.clone(),
        r_grid: log_grid(1e-3, 3.9, 40),
    };
    let runs = kernels
        .iter()
        .map(|(name, k)| (*name, k, &plan))
        .chain(std::iter::once(("tabulated", &table, &table_plan)));
    for (name, k, plan) in runs {
        let r = measure_growth(k, plan)?;
        println!(
            "{name}: declared [{:.3}, {:.3}], measured r g'/g + 1 in [{:.3}, {:.3}], r G'/G in [{:.3}, {:.3}], {}",
            r.declared.0,
            r.declared.1,
            r.exponent_range.0,
            r.exponent_range.1,
            r.ratio_range.0,
            r.ratio_range.1,
            if r.passed() { "ok" } else { "violated" }
        );
        for c in &r.caveats {
            println!("  note: {c}");
        }
    }

    let wrong = KernelSpec::power(3.0, 1.0)?.with_exponents(1.0, 1.5)?;
    let r = measure_growth(&wrong, &plan)?;
    if let Some(w) = r.worst() {
        println!("p = 3 declared as [1, 1.5]: worst {} = {:.4} at r = {:.2e}", w.condition, w.value, w.r);
    }
    Ok(())
}
