//! Writes and reads IDX image and label files.

use riskseq::sampler::{load_idx, parse_idx, write_idx, IdxArray};

fn main() -> riskseq::Result<()> {
    let dir = std::env::temp_dir().join("riskseq-example-idx");
    std::fs::create_dir_all(&dir).map_err(|e| riskseq::Error::io(&dir, e))?;
    let images = IdxArray {
        dims: vec![3, 4, 4],
        data: (0..48).map(|v| (v * 5) as u8).collect(),
    };
    let path = dir.join("images-idx3-ubyte");
    write_idx(&path, &images)?;
    let back = load_idx(&path)?;
    println!("dims {:?}, identical: {}", back.dims, back == images);
    for (i, img) in back.images()?.iter().enumerate() {
        println!("image {i}: {:?}", img.shape());
    }
    let bytes = std::fs::read(&path).map_err(|e| riskseq::Error::io(&path, e))?;
    let err = parse_idx(&bytes[..10], "truncated").unwrap_err();
    println!("{err} (exit code {})", err.exit_code());
    Ok(())
}
