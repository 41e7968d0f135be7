//! Point-cloud down-sampling: farthest point sampling, k-nearest-neighbor
//! grouping and per-channel max pooling on the scalar component.

use nalgebra::Vector3;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};

/// Greedy farthest point sampling. The first pick is the point farthest
/// from the centroid; ties go to the lowest index.
pub fn farthest_point_sampling(points: &[Vector3<f64>], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > points.len() {
        return Err(invalid(format!("cannot select {m} of {} points", points.len())));
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let first = argmax(points.iter().map(|p| (p - centroid).norm_squared()));
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < m {
        let next = argmax(dist.iter().copied());
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    Ok(chosen)
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Indices of the `k` nearest points to each center (the center itself
/// included), nearest first, ties by lowest index.
pub fn k_nearest(points: &[Vector3<f64>], centers: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > points.len() {
        return Err(invalid(format!("k = {k} neighbors out of range for {} points", points.len())));
    }
    Ok(centers
        .iter()
        .map(|&c| {
            let mut order: Vec<(f64, usize)> =
                points.iter().enumerate().map(|(i, p)| ((p - points[c]).norm_squared(), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order.into_iter().take(k).map(|(_, i)| i).collect()
        })
        .collect())
}

/// Down-samples `[N, C, 16]` tokens located at `positions` to `m` tokens:
/// each selected token takes, per channel, the neighbor with the largest
/// scalar component. Returns the pooled tokens and the selected indices.
pub fn downsample(tape: &mut Tape, x: Var, positions: &[Vector3<f64>], m: usize, k: usize) -> Result<(Var, Vec<usize>)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[0] != positions.len() {
        return Err(invalid(format!("{} positions for tokens shaped {shape:?}", positions.len())));
    }
    let c = shape[1];
    let selected = farthest_point_sampling(positions, m)?;
    let groups = k_nearest(positions, &selected, k)?;
    let data = tape.value(x).data();
    let mut index = Vec::with_capacity(m * c);
    for group in &groups {
        for ch in 0..c {
            let mut best = group[0];
            for &i in &group[1..] {
                if data[(i * c + ch) * 16] > data[(best * c + ch) * 16] {
                    best = i;
                }
            }
            index.push(best);
        }
    }
    Ok((tape.gather(x, index)?, selected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force FPS: at each step scan every unchosen point and every
    /// chosen point explicitly.
    fn fps_oracle(points: &[Vector3<f64>], m: usize) -> Vec<usize> {
        let n = points.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut cz = 0.0;
        for p in points {
            cx += p.x;
            cy += p.y;
            cz += p.z;
        }
        let c = Vector3::new(cx / n as f64, cy / n as f64, cz / n as f64);
        let mut first = 0;
        for i in 1..n {
            if (points[i] - c).norm() > (points[first] - c).norm() {
                first = i;
            }
        }
        let mut chosen = vec![first];
        while chosen.len() < m {
            let mut best = None;
            let mut best_d = -1.0;
            for i in 0..n {
                let d = chosen.iter().map(|&j| (points[i] - points[j]).norm()).fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            chosen.push(best.unwrap());
        }
        chosen
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn fps_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.gen_range(2..=32);
            let pts = cloud(&mut rng, n);
            let m = rng.gen_range(1..=n);
            assert_eq!(farthest_point_sampling(&pts, m).unwrap(), fps_oracle(&pts, m));
        }
    }

    #[test]
    fn selecting_all_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let pts = cloud(&mut rng, 20);
        let mut sel = farthest_point_sampling(&pts, 20).unwrap();
        sel.sort();
        assert_eq!(sel, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn single_neighbor_keeps_own_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pts = cloud(&mut rng, 10);
        let x = Tensor::new(vec![10, 2, 16], (0..320).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (out, sel) = downsample(&mut tape, xv, &pts, 4, 1).unwrap();
        for (t, &s) in sel.iter().enumerate() {
            assert_eq!(&tape.value(out).data()[t * 32..(t + 1) * 32], &x.data()[s * 32..(s + 1) * 32]);
        }
    }

    #[test]
    fn pools_largest_scalar_per_channel() {
        let pts: Vec<_> = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let mut x = Tensor::zeros(vec![4, 2, 16]);
        // Channel 0 scalars favor token 1, channel 1 favors token 2.
        for (t, (a, b)) in [(0.0, 0.0), (5.0, -1.0), (1.0, 7.0), (0.5, 0.5)].iter().enumerate() {
            x.data_mut()[(t * 2) * 16] = *a;
            x.data_mut()[(t * 2 + 1) * 16] = *b;
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let (out, sel) = downsample(&mut tape, xv, &pts, 1, 4).unwrap();
        assert_eq!(sel, vec![0]);
        assert_eq!(tape.value(out).data()[0], 5.0);
        assert_eq!(tape.value(out).data()[16], 7.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let pts = vec![Vector3::zeros(); 3];
        assert!(farthest_point_sampling(&pts, 4).is_err());
        assert!(farthest_point_sampling(&pts, 0).is_err());
        assert!(k_nearest(&pts, &[0], 0).is_err());
        assert!(k_nearest(&pts, &[0], 4).is_err());
    }
}
