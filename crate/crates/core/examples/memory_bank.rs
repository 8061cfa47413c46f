//! Memory-bank scoring on random features: exact nearest-neighbor scores,
//! greedy k-center thinning, and a save/load round trip.

use cpmf::detect::{load_bank, save_bank, score, ImageScore, MemoryBank};
use cpmf::{FeatureMatrix, Modality};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let data = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMatrix::new(rows, dim, data, Modality::Cpmf).expect("finite")
}

fn main() -> cpmf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train = vec![random(300, 481, &mut rng), random(200, 481, &mut rng)];
    let bank = MemoryBank::fit(&train, 1.0, 0)?;
    println!("bank: {} rows x {} dims", bank.len(), bank.dim());

    let self_scores = bank.score(&train[0])?;
    println!("max self score: {:e}", self_scores.iter().copied().fold(0.0, f64::max));

    let test = random(50, 481, &mut rng);
    let r = score(&bank, &test, None, ImageScore::Max)?;
    let top = score(&bank, &test, None, ImageScore::TopMean { q: 0.1 })?;
    println!("test image score: max {:.4}, top-10% mean {:.4}", r.image_score, top.image_score);

    let thin = MemoryBank::fit(&train, 0.1, 7)?;
    let thin_scores = thin.score(&test)?;
    let worse = thin_scores.iter().zip(&r.point_scores).filter(|(t, f)| t >= f).count();
    println!("coreset 10%: {} rows; {worse}/{} test scores not lower than the full bank", thin.len(), test.rows());

    let path = std::env::temp_dir().join("cpmf_example_bank.bin");
    save_bank(&bank, &path)?;
    let loaded = load_bank(&path, Some(481))?;
    println!(
        "reloaded {} rows from {} ({} bytes); stored rows rescore to {:e}",
        loaded.len(),
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        loaded.score(&train[1])?.iter().copied().fold(0.0, f64::max)
    );
    let _ = std::fs::remove_file(&path);
    Ok(())
}
