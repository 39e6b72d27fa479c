//! Saves and reloads network parameters and shows how damaged files fail.

use riskseq::net::{load_params, load_params_for, save_params, ConvNetConfig, ModelParams};
use riskseq::seed::rng_from_seed;

fn main() -> riskseq::Result<()> {
    let config = ConvNetConfig::new(28, 28);
    let params = ModelParams::init(config, &mut rng_from_seed(0))?;
    let dir = std::env::temp_dir().join("riskseq-example-checkpoint");
    std::fs::create_dir_all(&dir).map_err(|e| riskseq::Error::io(&dir, e))?;
    let path = dir.join("params.bin");
    save_params(&params, &path)?;
    let back = load_params(&path)?;
    println!("{} parameters, identical after reload: {}", params.len(), back.flatten() == params.flatten());

    let narrow = config.with_filters(16, 32);
    let err = load_params_for(&path, &narrow).unwrap_err();
    println!("wrong architecture: {err} (exit code {})", err.exit_code());
    let bytes = std::fs::read(&path).map_err(|e| riskseq::Error::io(&path, e))?;
    std::fs::write(&path, &bytes[..bytes.len() / 2]).map_err(|e| riskseq::Error::io(&path, e))?;
    let err = load_params(&path).unwrap_err();
    println!("truncated file: {err} (exit code {})", err.exit_code());
    Ok(())
}
