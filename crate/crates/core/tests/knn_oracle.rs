use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sevbench_core::{EmbeddingVector, FlatIndex, IndexMetadata, RecordId};

/// Independent reference: score every entry in f64, stable sort, take k.
fn brute_force(rows: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut sum = 0.0f64;
            for d in 0..row.len() {
                let diff = f64::from(row[d]) - f64::from(query[d]);
                sum += diff * diff;
            }
            (i, sum.sqrt())
        })
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    scored.truncate(k);
    scored
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| (rng.next_u32() as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32)
                .collect()
        })
        .collect()
}

#[test]
fn search_matches_brute_force() {
    for dim in [32usize, 96] {
        let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
        let rows = random_rows(&mut rng, 1_000, dim);
        let index = FlatIndex::build(
            rows.iter()
                .enumerate()
                .map(|(i, r)| (RecordId::Int(i as i64 * 7), EmbeddingVector::new(r.clone()).unwrap())),
            IndexMetadata::default(),
        )
        .unwrap();
        let queries = random_rows(&mut rng, 50, dim);
        for q in &queries {
            let query = EmbeddingVector::new(q.clone()).unwrap();
            for k in [1, 3, 5] {
                let got = index.search(&query, k).unwrap();
                let want = brute_force(&rows, q, k);
                assert_eq!(got.len(), want.len());
                for (hit, (pos, dist)) in got.iter().zip(&want) {
                    assert_eq!(hit.position, *pos);
                    assert_eq!(hit.id, RecordId::Int(*pos as i64 * 7));
                    assert!((hit.distance - dist).abs() <= 1e-6 * dist.max(1e-12));
                }
            }
        }
        // every entry finds itself at distance exactly zero
        for (i, row) in rows.iter().enumerate().step_by(97) {
            let hit = &index.search(&EmbeddingVector::new(row.clone()).unwrap(), 1).unwrap()[0];
            assert_eq!((hit.position, hit.distance), (i, 0.0));
        }
    }
}
