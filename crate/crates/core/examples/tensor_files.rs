//! The on-disk formats: tensor files, the manifest and model checkpoints.
//!
//! cargo run --release --example tensor_files

use pitchflow::dataset::{clip_to_tensor, synth_generate, Manifest, SynthParams};
use pitchflow::model::{checkpoint, Tiny3d, Tiny3dConfig};
use pitchflow::tensor_file::{self, TensorData};

fn main() -> pitchflow::Result<()> {
    let dir = std::env::temp_dir().join(format!("pitchflow-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| pitchflow::Error::io("creating scratch dir", e))?;

    let t = TensorData::new(vec![2, 3], vec![0.0, 1.5, -2.0, 3.25, 4.0, -0.5])?;
    let path = dir.join("small.pgt");
    tensor_file::write(&path, &t)?;
    let bytes = std::fs::read(&path).map_err(|e| pitchflow::Error::io("reading back", e))?;
    println!(
        "tensor file: {} bytes, header {:02x?}",
        bytes.len(),
        &bytes[..8]
    );
    assert_eq!(tensor_file::read(&path)?, t);

    let corpus = synth_generate(&SynthParams {
        left_pitchers: 1,
        right_pitchers: 0,
        healthy_per_pitcher: 3,
        injured_per_event: 2,
        ..SynthParams::compact()
    })?;
    let manifest_path = dir.join("manifest.jsonl");
    corpus.manifest().write(&manifest_path)?;
    let reread = Manifest::read(&manifest_path)?;
    println!(
        "manifest: {} records, fingerprint {}",
        reread.len(),
        &reread.fingerprint()[..16]
    );
    let first = &corpus.manifest().records()[0];
    let clip = clip_to_tensor(&corpus.render(first)?);
    println!("clip {} stored as shape {:?}", first.clip_ref, clip.shape);

    let net: Tiny3d<f32> = Tiny3d::new(&Tiny3dConfig::compact())?;
    let ckpt = dir.join("model.pgc");
    checkpoint::save(&net, &ckpt)?;
    let loaded: Tiny3d<f32> = checkpoint::load(&Tiny3dConfig::compact(), &ckpt)?;
    assert_eq!(loaded.flat_params(), net.flat_params());
    println!("checkpoint: {} parameters round-tripped", net.num_params());

    let mut other = Tiny3dConfig::compact();
    other.seed += 1;
    match checkpoint::load::<f32>(&other, &ckpt) {
        Err(e) => println!("loading under a different config fails: {e}"),
        Ok(_) => unreachable!("config hash must be checked"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
