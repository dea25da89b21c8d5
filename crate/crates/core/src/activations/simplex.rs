use crate::error::{Error, Result};

/// Unit reference directions `ē₁ … ēₙ` at the vertices of a regular
/// simplex centred on the origin of `ℝⁿ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRefs {
    vertices: Vec<Vec<f64>>,
}

impl SimplexRefs {
    /// Number of classes (vertices).
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    /// Ambient dimension, always `n - 1`.
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertex(&self, l: usize) -> &[f64] {
        &self.vertices[l]
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }
}

/// Builds the `n` vertices of a regular simplex inscribed in the unit sphere.
///
/// The standard basis of `ℝⁿ` is centred on its centroid, the first `n-1`
/// centred vectors are orthonormalized (modified Gram-Schmidt, two passes),
/// every centred vector is expressed in that basis, and the coordinates are
/// rescaled to unit length. Pairwise dot products are `-1/(n-1)`; for `n = 2`
/// the result is `{+1, -1}`.
pub fn simplex_vertices(n: usize) -> Result<SimplexRefs> {
    if n < 2 {
        return Err(Error::Argument(format!("a simplex needs at least 2 vertices, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let centred: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| if k == i { 1.0 - inv_n } else { -inv_n }).collect())
        .collect();

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for v in centred.iter().take(n - 1) {
        let mut b = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&b, q);
                for (bk, qk) in b.iter_mut().zip(q) {
                    *bk -= proj * qk;
                }
            }
        }
        let norm = dot(&b, &b).sqrt();
        b.iter_mut().for_each(|x| *x /= norm);
        basis.push(b);
    }

    let vertices = centred
        .iter()
        .map(|v| {
            let coords: Vec<f64> = basis.iter().map(|b| dot(v, b)).collect();
            let norm = dot(&coords, &coords).sqrt();
            coords.into_iter().map(|c| c / norm).collect()
        })
        .collect();
    Ok(SimplexRefs { vertices })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(refs: &SimplexRefs) {
        let n = refs.n();
        let target = -1.0 / (n as f64 - 1.0);
        let mut sum = vec![0.0; refs.dim()];
        for i in 0..n {
            assert_eq!(refs.vertex(i).len(), n - 1);
            assert!((dot(refs.vertex(i), refs.vertex(i)) - 1.0).abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    let d = dot(refs.vertex(i), refs.vertex(j));
                    assert!((d - target).abs() < 1e-12, "n={n} ({i},{j}): {d}");
                }
            }
            for (s, v) in sum.iter_mut().zip(refs.vertex(i)) {
                *s += v;
            }
        }
        assert!(sum.iter().all(|s| s.abs() < 1e-12), "n={n}: {sum:?}");
    }

    #[test]
    fn two_classes_give_plus_minus_one() {
        let refs = simplex_vertices(2).unwrap();
        assert_eq!(refs.vertices(), &[vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn three_classes_form_a_triangle() {
        let refs = simplex_vertices(3).unwrap();
        check_invariants(&refs);
        assert!((refs.vertex(0)[0] - 1.0).abs() < 1e-15);
        assert!(refs.vertex(0)[1].abs() < 1e-15);
    }

    #[test]
    fn invariants_hold_up_to_32() {
        for n in 2..=32 {
            check_invariants(&simplex_vertices(n).unwrap());
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(simplex_vertices(0).is_err());
        assert!(simplex_vertices(1).is_err());
    }
}
