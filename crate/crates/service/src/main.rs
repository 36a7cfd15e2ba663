//! `pml-pdp` — serve the policy decision point over HTTP.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pml_pdp::{router, PdpConfig, PdpState};

#[derive(Parser)]
#[command(name = "pml-pdp", version, about = "PML policy decision point")]
struct Args {
    /// Address to serve on
    #[arg(long, env = "LISTEN_ADDR", default_value = "127.0.0.1:8181")]
    listen_addr: String,
    /// Model file (.pml)
    #[arg(long, env = "MODEL_PATH")]
    model_path: PathBuf,
    /// Policy file (.csv); PUT /v1/policies persists here
    #[arg(long, env = "POLICY_PATH")]
    policy_path: PathBuf,
    /// Evaluation step budget per expression run
    #[arg(long, env = "STEP_BUDGET", default_value_t = pml_core::DEFAULT_STEP_BUDGET)]
    step_budget: u64,
    /// Reject policy updates over HTTP
    #[arg(long, env = "READ_ONLY")]
    read_only: bool,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let config = PdpConfig {
        listen_addr: args.listen_addr,
        model_path: args.model_path,
        policy_path: args.policy_path,
        step_budget: args.step_budget,
        read_only: args.read_only,
    };

    let state = match PdpState::initialize(config.clone()) {
        Ok(state) => state,
        Err(e) => {
            eprintln!("pml-pdp: {e}");
            return ExitCode::from(2);
        }
    };

    let listener = match tokio::net::TcpListener::bind(&config.listen_addr).await {
        Ok(listener) => listener,
        Err(e) => {
            eprintln!("pml-pdp: binding {}: {e}", config.listen_addr);
            return ExitCode::from(2);
        }
    };
    match listener.local_addr() {
        Ok(addr) => println!("pml-pdp listening on {addr}"),
        Err(_) => println!("pml-pdp listening on {}", config.listen_addr),
    }

    let serve = axum::serve(listener, router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    if let Err(e) = serve.await {
        eprintln!("pml-pdp: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
