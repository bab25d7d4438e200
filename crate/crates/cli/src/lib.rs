//! Staged pipeline around `entcap-core`: generate → label → train → eval,
//! plus predict and convergence. Files are the interchange between stages;
//! every run leaves a `<output>.manifest.json` next to its primary output.

pub mod args;
pub mod commands;
pub mod output;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => {
            let s = commands::generate(a)?;
            println!("wrote {} circuits to {}", s.count, a.out.display());
            for (strategy, n) in &s.tally {
                println!("{strategy}\t{n}");
            }
        }
        Command::Label(a) => {
            let s = commands::label(a)?;
            println!(
                "labeled {} circuits (mean Ent {:.4}) into {}",
                s.count,
                s.mean_ent,
                a.out.display()
            );
        }
        Command::Train(a) => {
            let s = commands::train(a)?;
            println!(
                "best epoch {} (selected on {} loss); test Pc {}, RMSE {:.4} over {} records",
                s.best_epoch,
                s.selection,
                s.test_pc.map_or("undefined".into(), |p| format!("{p:.4}")),
                s.test_rmse,
                s.test_count
            );
        }
        Command::Eval(a) => {
            let r = commands::eval(a)?;
            println!("count\t{}\npc\t{:.6}\nrmse\t{:.6}", r.count, r.pc, r.rmse);
            if let Some(s) = &r.subsample {
                println!(
                    "subsample median pc\t{:.6}\nsubsample fraction > 0.90\t{:.4}\nsubsample redraws\t{}",
                    s.median(),
                    s.fraction_above(0.90),
                    s.redraws
                );
            }
        }
        Command::Predict(a) => {
            let n = commands::predict(a)?;
            println!("wrote {n} predictions to {}", a.out.display());
        }
        Command::Convergence(a) => {
            let rows = commands::convergence(a)?;
            println!("n_qubits\tsample_count\tmean\tstd");
            for r in rows {
                println!("{}\t{}\t{:.6}\t{:.6}", r.n_qubits, r.sample_count, r.mean, r.std);
            }
        }
    }
    Ok(())
}
