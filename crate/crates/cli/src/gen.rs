//! The gen verb: build one instance from generator flags and save it as
//! JSON for later runs, verification, or sharing.

use std::path::PathBuf;

use clap::Args;

use bcu::Instance;

use crate::verify::FamilyArgs;
use crate::Failure;

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Output path for the instance JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let spec = args.family.build_spec()?;
    let inst: Instance = spec.build()?;
    inst.save(&args.out)?;
    let bytes = std::fs::metadata(&args.out).map(|m| m.len()).unwrap_or(0);
    println!(
        "wrote {} instance: {} blocks, dim {}, {} rows, fingerprint {:016x}, {} bytes to {}",
        match spec.family {
            bcu::Family::BasisPursuit { .. } => "basis_pursuit",
            bcu::Family::Ncqp { .. } => "ncqp",
            bcu::Family::DualSvm { .. } => "dual_svm",
        },
        inst.block_count(),
        inst.dim(),
        inst.num_rows(),
        inst.fingerprint(),
        bytes,
        args.out.display()
    );
    Ok(())
}
