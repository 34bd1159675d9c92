//! `gecc`: compress node embeddings into compositional hash codes and
//! train the decoders that read them back.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gecc", version, about = "Hash-code compression for node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hash rows of a graph or embedding matrix into compositional codes.
    Encode(commands::EncodeArgs),
    /// Compare code collision counts for median vs zero thresholds.
    Collisions(commands::CollisionsArgs),
    /// Fit a decoder to reconstruct target embeddings from codes.
    TrainRecon(commands::TrainReconArgs),
    /// Train decoder + GraphSAGE end to end for node classification.
    TrainNode(commands::TrainNodeArgs),
    /// Print the memory footprint table for a deployment shape.
    MemReport(commands::MemReportArgs),
    /// Sample a stochastic block model graph with labels.
    SynthSbm(commands::SynthSbmArgs),
    /// Sample clustered Gaussian embeddings.
    SynthEmb(commands::SynthEmbArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => commands::cmd_encode(a),
        Command::Collisions(a) => commands::cmd_collisions(a),
        Command::TrainRecon(a) => commands::cmd_train_recon(a),
        Command::TrainNode(a) => commands::cmd_train_node(a),
        Command::MemReport(a) => commands::cmd_mem_report(a),
        Command::SynthSbm(a) => commands::cmd_synth_sbm(a),
        Command::SynthEmb(a) => commands::cmd_synth_emb(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
