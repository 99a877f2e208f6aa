use rand::Rng;
use rand_distr::StandardNormal;
use reftraj_core::projection::{fit_projection, silhouette_score};
use reftraj_core::rng::rng_from;
use reftraj_core::EmbeddingVector;

fn blob(rng: &mut impl Rng, center: &[f64], sigma: f64, n: usize) -> Vec<EmbeddingVector> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = center
                .iter()
                .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            EmbeddingVector::new(v, center.len()).unwrap()
        })
        .collect()
}

/// Top eigenpairs of the sample covariance by power iteration with deflation.
fn power_oracle(data: &[EmbeddingVector], k: usize) -> Vec<(f64, Vec<f64>)> {
    let n = data.len();
    let d = data[0].dim();
    let mut mean = vec![0.0; d];
    for e in data {
        for (m, v) in mean.iter_mut().zip(e.as_slice()) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for e in data {
        let c: Vec<f64> = e.as_slice().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += c[i] * c[j] / (n - 1) as f64;
            }
        }
    }
    let mut out = Vec::new();
    for _ in 0..k {
        let mut v = vec![1.0; d];
        v[0] = 2.0;
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let w: Vec<f64> = cov.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            lambda = norm;
            if delta < 1e-14 {
                break;
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

#[test]
fn components_match_power_iteration() {
    let mut rng = rng_from(5);
    let d = 8;
    // Anisotropic cloud with a clear eigengap.
    let data: Vec<EmbeddingVector> = (0..300)
        .map(|_| {
            let v: Vec<f64> = (0..d)
                .map(|j| (3.0 / (j + 1) as f64) * rng.sample::<f64, _>(StandardNormal))
                .collect();
            EmbeddingVector::new(v, d).unwrap()
        })
        .collect();
    let model = fit_projection(&data).unwrap();
    let oracle = power_oracle(&data, 2);
    for (k, (lambda, v)) in oracle.iter().enumerate() {
        let c = &model.components[k];
        let align: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
        assert!((align.abs() - 1.0).abs() < 1e-8, "component {k}: |cos| = {}", align.abs());
        let rel = (model.explained_variance[k] - lambda).abs() / lambda;
        assert!(rel < 1e-8, "variance {k}: rel diff {rel}");
    }
}

#[test]
fn components_are_orthonormal_and_ordered() {
    for seed in 0..10 {
        let mut rng = rng_from(seed);
        let center = vec![0.0; 16];
        let data = blob(&mut rng, &center, 1.0, 60);
        let m = fit_projection(&data).unwrap();
        let [a, b] = &m.components;
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        assert!((dot(a, a) - 1.0).abs() < 1e-8);
        assert!((dot(b, b) - 1.0).abs() < 1e-8);
        assert!(dot(a, b).abs() < 1e-8);
        assert!(m.explained_variance[0] >= m.explained_variance[1]);
        assert!(m.explained_variance[1] >= 0.0);
        let r = m.explained_variance_ratio();
        assert!(r[0] + r[1] <= 1.0 + 1e-12);
    }
}

#[test]
fn separated_clusters_score_high() {
    let mut rng = rng_from(17);
    let mut c1 = vec![0.0; 32];
    let mut c2 = vec![0.0; 32];
    c1[0] = 1.0;
    c2[1] = 1.0;
    let mut data = blob(&mut rng, &c1, 0.02, 100);
    data.extend(blob(&mut rng, &c2, 0.02, 100));
    let labels: Vec<u8> = (0..200).map(|i| (i / 100) as u8).collect();
    let s = silhouette_score(&data, &labels).unwrap();
    assert!(s > 0.9, "silhouette {s}");
}

#[test]
fn random_labels_on_one_blob_score_near_zero() {
    let mut rng = rng_from(23);
    let mut center = vec![0.0; 16];
    center[0] = 3.0;
    let data = blob(&mut rng, &center, 1.0, 1000);
    let labels: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
    let s = silhouette_score(&data, &labels).unwrap();
    assert!(s.abs() < 0.1, "silhouette {s}");
}
