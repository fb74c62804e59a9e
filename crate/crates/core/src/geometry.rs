//! Manifold primitives for `S^n` and SO(3): unit vectors, tangent projection,
//! the skew map, rotations, uniform sampling and the regular polyhedra used as
//! reference equilibria.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on `|‖x‖ - 1|` accepted by [`UnitVector::new`].
pub const UNIT_TOL: f64 = 1e-12;

/// Tolerance on orthogonality and determinant accepted by [`Rotation3::new`].
pub const ROTATION_TOL: f64 = 1e-10;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `s = 1 - <x, y>`, half the squared chordal distance between two unit vectors.
#[inline]
pub fn chordal(x: &[f64], y: &[f64]) -> f64 {
    1.0 - dot(x, y)
}

/// A point on `S^n`, stored in ambient coordinates of `R^{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Accepts `coords` if its norm is within [`UNIT_TOL`] of one.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = norm(&coords);
        if coords.len() < 2 || !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit { norm: n });
        }
        Ok(Self(coords))
    }

    /// Scales a nonzero vector onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let n = norm(&coords);
        if coords.len() < 2 || !n.is_finite() || n < 1e-300 {
            return Err(Error::NotUnit { norm: n });
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self(coords))
    }

    /// The `k`-th standard basis vector of `R^ambient`.
    pub fn basis(ambient: usize, k: usize) -> Self {
        assert!(ambient >= 2 && k < ambient);
        let mut v = vec![0.0; ambient];
        v[k] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Ambient dimension `n + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    /// Sphere dimension `n`.
    pub fn sphere_dim(&self) -> usize {
        self.0.len() - 1
    }
}

impl<'de> Deserialize<'de> for UnitVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(d)?;
        UnitVector::new(coords).map_err(serde::de::Error::custom)
    }
}

/// A vector in the tangent space `T_x S^n = {v | <v, x> = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: UnitVector,
    coords: Vec<f64>,
}

impl TangentVector {
    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Orthogonal projection `(I - x⊗x) v` onto the tangent space at `x`.
pub fn project(x: &UnitVector, v: &[f64]) -> Result<TangentVector> {
    if v.len() != x.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: x.ambient_dim(),
            found: v.len(),
        });
    }
    let mut coords = v.to_vec();
    project_in_place(x.coords(), &mut coords);
    Ok(TangentVector {
        base: x.clone(),
        coords,
    })
}

#[inline]
pub(crate) fn project_in_place(x: &[f64], v: &mut [f64]) {
    let c = dot(x, v);
    v.iter_mut().zip(x).for_each(|(vi, xi)| *vi -= c * xi);
}

/// Orthonormal basis of `x^⊥` (the `n` columns of a Householder reflector
/// that maps `x` to a signed coordinate axis, minus that axis).
pub fn tangent_basis(x: &[f64]) -> Vec<Vec<f64>> {
    let d = x.len();
    let k = (0..d)
        .max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()))
        .unwrap_or(0);
    let sign = if x[k] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = x.to_vec();
    v[k] += sign;
    let vv = dot(&v, &v);
    (0..d)
        .filter(|&c| c != k)
        .map(|c| {
            (0..d)
                .map(|r| {
                    let id = if r == c { 1.0 } else { 0.0 };
                    id - 2.0 * v[r] * v[c] / vv
                })
                .collect()
        })
        .collect()
}

/// Geodesic angle and chordal half-square `s = 1 - cos(angle)`.
pub fn geodesic_and_chordal(x: &UnitVector, y: &UnitVector) -> Result<(f64, f64)> {
    if x.ambient_dim() != y.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: x.ambient_dim(),
            found: y.ambient_dim(),
        });
    }
    let c = dot(x.coords(), y.coords()).clamp(-1.0, 1.0);
    Ok((c.acos(), 1.0 - c))
}

/// `S(w)`, the matrix with `S(w) y = w × y`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`]. Rejects matrices that are not antisymmetric to 1e-10.
pub fn unskew(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let dev = (m + m.transpose()).abs().max();
    if dev > 1e-10 {
        return Err(Error::NotAntisymmetric(dev));
    }
    Ok(Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ))
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orth = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !orth.is_finite() || orth > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "|R^T R - I|_F = {orth:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rotation from a (not necessarily normalized) quaternion `(w, x, y, z)`.
    /// `q` and `-q` give the same rotation.
    pub fn from_quaternion(q: [f64; 4]) -> Result<Self> {
        let n2: f64 = q.iter().map(|c| c * c).sum();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::InvalidRotation("zero quaternion".into()));
        }
        let [w, x, y, z] = q.map(|c| c / n2.sqrt());
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        Ok(Self(m))
    }

    /// `exp(S(w))` by the Rodrigues formula.
    pub fn exp(w: &Vector3<f64>) -> Self {
        Self(rodrigues(w))
    }

    /// Rotation by `angle` about the z axis.
    pub fn about_z(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Column `k` of the matrix (`x`, `y`, `z` axes of the body frame for k = 0, 1, 2).
    pub fn axis(&self, k: usize) -> Vector3<f64> {
        self.0.column(k).into_owned()
    }
}

pub(crate) fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < 1e-12 {
        // Taylor series; truncation error below 1e-25.
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Gram-Schmidt on the columns; removes rounding drift from long products.
pub(crate) fn reorthonormalize(m: &mut Matrix3<f64>) {
    let x = m.column(0).normalize();
    let mut y = m.column(1).into_owned();
    y -= x * x.dot(&y);
    let y = y.normalize();
    let z = x.cross(&y);
    m.set_column(0, &x);
    m.set_column(1, &y);
    m.set_column(2, &z);
}

/// Uniform sample on `S^n` by normalizing a standard Gaussian in `R^{n+1}`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitVector {
    assert!(n >= 1, "sphere dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&v);
        if len > 1e-12 {
            return UnitVector(v.into_iter().map(|c| c / len).collect());
        }
    }
}

/// Haar-uniform rotation via a uniform unit quaternion on `S^3`.
pub fn sample_uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    let q = sample_unit_sphere(3, rng);
    let c = q.coords();
    Rotation3::from_quaternion([c[0], c[1], c[2], c[3]]).expect("unit quaternion")
}

/// The five regular polyhedra, inscribed in `S^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polyhedron {
    Tetrahedron,
    Octahedron,
    Cube,
    Icosahedron,
    Dodecahedron,
}

impl Polyhedron {
    pub fn vertex_count(self) -> usize {
        match self {
            Polyhedron::Tetrahedron => 4,
            Polyhedron::Octahedron => 6,
            Polyhedron::Cube => 8,
            Polyhedron::Icosahedron => 12,
            Polyhedron::Dodecahedron => 20,
        }
    }

    /// Vertex coordinates on the unit sphere. Edges of the polyhedron join
    /// exactly the vertex pairs at minimal mutual distance.
    pub fn vertices(self) -> Vec<[f64; 3]> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let signs = [1.0, -1.0];
        let mut raw: Vec<[f64; 3]> = Vec::new();
        match self {
            Polyhedron::Tetrahedron => {
                raw.extend([
                    [1.0, 1.0, 1.0],
                    [1.0, -1.0, -1.0],
                    [-1.0, 1.0, -1.0],
                    [-1.0, -1.0, 1.0],
                ]);
            }
            Polyhedron::Octahedron => {
                for k in 0..3 {
                    for s in signs {
                        let mut v = [0.0; 3];
                        v[k] = s;
                        raw.push(v);
                    }
                }
            }
            Polyhedron::Cube => {
                for a in signs {
                    for b in signs {
                        for c in signs {
                            raw.push([a, b, c]);
                        }
                    }
                }
            }
            Polyhedron::Icosahedron => {
                for a in signs {
                    for b in signs {
                        let (p, q) = (a, b * phi);
                        raw.push([0.0, p, q]);
                        raw.push([p, q, 0.0]);
                        raw.push([q, 0.0, p]);
                    }
                }
            }
            Polyhedron::Dodecahedron => {
                for a in signs {
                    for b in signs {
                        for c in signs {
                            raw.push([a, b, c]);
                        }
                    }
                }
                for a in signs {
                    for b in signs {
                        let (p, q) = (a / phi, b * phi);
                        raw.push([0.0, p, q]);
                        raw.push([p, q, 0.0]);
                        raw.push([q, 0.0, p]);
                    }
                }
            }
        }
        raw.into_iter()
            .map(|v| {
                let n = norm(&v);
                [v[0] / n, v[1] / n, v[2] / n]
            })
            .collect()
    }
}
