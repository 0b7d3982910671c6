use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use doorchain::bench::{self, BenchConfig, Target};
use doorchain::cardfile::CardFile;
use doorchain::client::{ClientError, GatewayClient};
use doorchain::config::NodeConfig;
use doorchain::gateway::{self, AppState, GatewayOptions};
use doorchain::network::Network;
use doorchain_core::chaincode::TransactionPayload;
use doorchain_core::codec::to_canonical_json;
use doorchain_core::domain::HolderCard;
use doorchain_core::ledger::verify_block_file;
use doorchain_core::{Department, Participant, PhysicalPlace, Role, SecretKey};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "doorchain", version, about = "Permissioned-ledger physical access control")]
struct Cli {
    /// Gateway base URL; defaults to the card file's `gateway` field.
    #[arg(long, global = true)]
    gateway: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the peer network and HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    #[command(subcommand)]
    Card(CardCommand),
    #[command(subcommand)]
    Admin(AdminCommand),
    #[command(subcommand)]
    Access(AccessCommand),
    #[command(subcommand)]
    Delegate(DelegateCommand),
    /// Query the audit trail.
    Historian {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: Option<String>,
        #[arg(long = "type")]
        transaction_type: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct CardArg {
    /// Holder card file.
    #[arg(long)]
    card: PathBuf,
}

#[derive(Subcommand)]
enum CardCommand {
    /// Write the first admin's card, derived from the network config.
    Bootstrap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a key pair and have the gateway certify it.
    Issue {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: String,
        #[arg(long)]
        out: PathBuf,
    },
    Revoke {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        card_id: String,
    },
}

#[derive(Subcommand)]
enum AdminCommand {
    RegisterParticipant {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        /// Admin, CEO, Manager or Employee.
        #[arg(long)]
        role: String,
        #[arg(long)]
        department: Option<String>,
    },
    RegisterPlace {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        description: String,
        #[arg(long)]
        department: String,
    },
    RegisterDepartment {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        ceo: String,
    },
}

#[derive(Subcommand)]
enum AccessCommand {
    Grant {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: String,
        #[arg(long)]
        place: String,
    },
    Revoke {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: String,
        #[arg(long)]
        place: String,
    },
    /// Present the card at a door.
    Check {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        place: String,
    },
}

#[derive(Subcommand)]
enum DelegateCommand {
    Grant {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: String,
        #[arg(long)]
        department: String,
    },
    Revoke {
        #[command(flatten)]
        card: CardArg,
        #[arg(long)]
        participant: String,
        #[arg(long)]
        department: String,
    },
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Verify the chain held by the gateway, or a block file offline.
    Verify {
        #[arg(long, required_unless_present = "blocks")]
        card: Option<PathBuf>,
        #[arg(long, conflicts_with = "card")]
        blocks: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `in-process` (default) or a gateway URL.
        #[arg(long, default_value = "in-process")]
        target: String,
    },
}

/// A failure that still has a JSON body worth printing.
struct Failure(Value);

fn fail_json(code: &str, message: impl std::fmt::Display) -> Failure {
    Failure(json!({ "error": { "code": code, "message": message.to_string() } }))
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<ClientError>() {
            Some(ClientError::Api { code, message, status }) => {
                Failure(json!({ "error": { "code": code, "message": message, "status": status } }))
            }
            Some(other) => fail_json(other.code(), other),
            None => fail_json("Error", format!("{e:#}")),
        }
    }
}

fn print<T: Serialize>(value: &T) {
    println!("{}", String::from_utf8_lossy(&to_canonical_json(value)));
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(body)) => {
            println!("{}", String::from_utf8_lossy(&to_canonical_json(&body)));
            ExitCode::FAILURE
        }
    }
}

async fn session(cli_gateway: &Option<String>, card: &Path) -> anyhow::Result<(GatewayClient, CardFile)> {
    let file = CardFile::load(card)?;
    let url = cli_gateway
        .clone()
        .or_else(|| file.gateway.clone())
        .context("no gateway URL: pass --gateway or set `gateway` in the card file")?;
    let client = GatewayClient::login(&url, file.to_holder()?).await?;
    Ok((client, file))
}

async fn submit(cli_gateway: &Option<String>, card: &Path, payload: TransactionPayload) -> Result<(), Failure> {
    let (client, _) = session(cli_gateway, card).await?;
    let receipt = client.submit(payload).await.map_err(anyhow::Error::from)?;
    let mut body = json!({
        "txId": receipt.tx_id,
        "valid": receipt.valid,
        "blockHeight": receipt.block_height,
        "txOffset": receipt.tx_offset,
    });
    if let Some(decision) = receipt.decision {
        body["decision"] = json!(decision);
        body["source"] = receipt.source.unwrap_or(Value::Null);
    }
    print(&body);
    Ok(())
}

async fn run(cli: Cli) -> Result<(), Failure> {
    let gw = &cli.gateway;
    match cli.command {
        Command::Serve { config } => serve(&config).await.map_err(Failure::from),
        Command::Card(CardCommand::Bootstrap { config, out }) => {
            let config = NodeConfig::load(&config)?;
            let holder = config.bootstrap_card()?;
            let url = gw.clone().unwrap_or_else(|| format!("http://{}", config.gateway.listen));
            CardFile::holder(&holder, Some(url)).save(&out)?;
            print(&holder.card);
            Ok(())
        }
        Command::Card(CardCommand::Issue { card, participant, out }) => {
            let (client, file) = session(gw, &card.card).await?;
            let key = SecretKey::generate(&mut rand::thread_rng());
            let issued = client.issue_card(&participant, key.public_key()).await.map_err(anyhow::Error::from)?;
            let holder = HolderCard { card: issued, private_key: key };
            let url = gw.clone().or(file.gateway);
            CardFile::holder(&holder, url).save(&out)?;
            print(&holder.card);
            Ok(())
        }
        Command::Card(CardCommand::Revoke { card, card_id }) => {
            submit(gw, &card.card, TransactionPayload::RevokeCard { card_id: card_id.into() }).await
        }
        Command::Admin(AdminCommand::RegisterParticipant { card, id, name, role, department }) => {
            let role = Role::parse(&role).ok_or_else(|| fail_json("InvalidArgument", format!("unknown role {role}")))?;
            let participant = Participant::new(&id, &name, role, department.as_deref());
            submit(gw, &card.card, TransactionPayload::RegisterParticipant { participant }).await
        }
        Command::Admin(AdminCommand::RegisterPlace { card, id, description, department }) => {
            let place = PhysicalPlace::new(&id, &description, &department);
            submit(gw, &card.card, TransactionPayload::RegisterPlace { place }).await
        }
        Command::Admin(AdminCommand::RegisterDepartment { card, id, name, ceo }) => {
            let department = Department { department_id: id.into(), name, ceo_participant_id: ceo.into() };
            submit(gw, &card.card, TransactionPayload::RegisterDepartment { department }).await
        }
        Command::Access(AccessCommand::Grant { card, participant, place }) => {
            let payload = TransactionPayload::GrantAccess { target_participant_id: participant.into(), place_id: place.into() };
            submit(gw, &card.card, payload).await
        }
        Command::Access(AccessCommand::Revoke { card, participant, place }) => {
            let payload = TransactionPayload::RevokeAccess { target_participant_id: participant.into(), place_id: place.into() };
            submit(gw, &card.card, payload).await
        }
        Command::Access(AccessCommand::Check { card, place }) => {
            submit(gw, &card.card, TransactionPayload::CheckAccess { place_id: place.into() }).await
        }
        Command::Delegate(DelegateCommand::Grant { card, participant, department }) => {
            let payload = TransactionPayload::DelegateAuthority { delegate_participant_id: participant.into(), department_id: department.into() };
            submit(gw, &card.card, payload).await
        }
        Command::Delegate(DelegateCommand::Revoke { card, participant, department }) => {
            let payload = TransactionPayload::RevokeDelegation { delegate_participant_id: participant.into(), department_id: department.into() };
            submit(gw, &card.card, payload).await
        }
        Command::Historian { card, participant, transaction_type, from, to, limit } => {
            let (client, _) = session(gw, &card.card).await?;
            let mut query = Vec::new();
            let fields = [("participant", participant), ("type", transaction_type), ("from", from), ("to", to), ("limit", limit.map(|l| l.to_string()))];
            for (name, value) in fields {
                if let Some(value) = value {
                    query.push((name, value));
                }
            }
            let records: Value = client.get("/api/historian", &query).await.map_err(anyhow::Error::from)?;
            print(&records);
            Ok(())
        }
        Command::Chain(ChainCommand::Verify { card, blocks }) => {
            let report = match (blocks, card) {
                (Some(path), _) => {
                    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                    verify_block_file(&bytes)
                }
                (None, Some(card)) => {
                    let (client, _) = session(gw, &card).await?;
                    client.get("/api/chain/verify", &[]).await.map_err(anyhow::Error::from)?
                }
                (None, None) => return Err(fail_json("InvalidArgument", "pass --card or --blocks")),
            };
            if report.ok {
                print(&report);
                Ok(())
            } else {
                Err(Failure(serde_json::to_value(&report).unwrap_or(Value::Null)))
            }
        }
        Command::Bench(BenchCommand::Run { config, out, target }) => bench_run(&config, out.as_deref(), &target).await.map_err(Failure::from),
    }
}

async fn serve(path: &Path) -> anyhow::Result<()> {
    init_tracing();
    let config = NodeConfig::load(path)?;
    let network = Network::from_config(&config)?;
    let state = AppState::new(
        network.clone(),
        config.issuer_key(),
        GatewayOptions { max_clock_skew: Duration::from_millis(config.gateway.max_clock_skew_ms) },
    );
    if let Some(url) = &config.gateway.webhook_url {
        gateway::spawn_webhook(network.clone(), url.clone());
    }
    let listener = tokio::net::TcpListener::bind(config.gateway.listen).await.with_context(|| format!("binding {}", config.gateway.listen))?;
    tracing::info!(listen = %listener.local_addr()?, height = network.read(|l| l.height()), "gateway ready");
    gateway::serve(listener, state).await?;
    Ok(())
}

async fn bench_run(path: &Path, out: Option<&Path>, target: &str) -> anyhow::Result<()> {
    let config = NodeConfig::load(path)?;
    let bench_config: BenchConfig = config.bench.clone().unwrap_or_default();
    bench_config.check()?;
    let admin = config.bootstrap_card()?;
    let target = if target == "in-process" {
        Target::InProcess { network: Network::from_config(&NodeConfig { gateway: Default::default(), ..config.clone() })?, admin, issuer: config.issuer_key() }
    } else {
        Target::Gateway { url: target.to_string(), admin }
    };
    let report = bench::run_round(&bench_config, &target).await?;
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{}", report.to_markdown());
    Ok(())
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}
