use std::io::Write;
use std::time::Instant;

use gkw_core::gradcheck::{check_architecture, GradcheckOptions};
use gkw_core::models::ArchitectureSpec;

use super::{line, log_resolved};
use crate::error::{CliError, CliResult};
use crate::{Arch, Globals};

/// Input width and vocabulary size of the toy instances.
pub const TOY_INPUT: usize = 3;
pub const TOY_WORDS: usize = 4;

pub fn toy_spec(arch: Arch) -> ArchitectureSpec {
    match arch {
        Arch::Cnn => ArchitectureSpec::toy_cnn(TOY_INPUT, TOY_WORDS),
        Arch::Psc => ArchitectureSpec::toy_psc(TOY_INPUT, TOY_WORDS),
    }
}

/// Always runs in 64-bit regardless of `--precision`.
pub fn run(
    arch: Arch,
    toy: bool,
    tolerance: f64,
    corrupt: bool,
    globals: &Globals,
    out: &mut (dyn Write + Send),
) -> CliResult<()> {
    if !toy {
        return Err(CliError::config(
            "only toy-size gradient checks are supported; pass --toy",
        ));
    }
    let spec = toy_spec(arch);
    let options = GradcheckOptions {
        corrupt,
        ..GradcheckOptions::default()
    };
    log_resolved("gradcheck", &(&spec, &options, tolerance));
    let start = Instant::now();
    let report = check_architecture(&spec, globals.seed.unwrap_or(0), &options)?;
    line(
        out,
        format!(
            "max relative error {:.3e} (worst {}), {} loss evaluations in {:.2}s",
            report.max_rel_err,
            report.worst_param,
            report.evaluations,
            start.elapsed().as_secs_f64()
        ),
    )?;
    if report.passes(tolerance) {
        line(out, format!("{} gradients pass at tolerance {tolerance:e}", spec.variant))
    } else {
        Err(CliError::numeric(format!(
            "gradient check failed: max relative error {:.3e} in {} exceeds {tolerance:e}",
            report.max_rel_err, report.worst_param
        )))
    }
}
