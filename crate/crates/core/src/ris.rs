//! RIS geometry, subarray tiling, spatial beamformers, the space-time code
//! matrix and the transmit beampattern.
//!
//! Elements sit on a `rows x cols` grid and are numbered row-major. The
//! element in row `r`, column `c` has steering phase
//! `pi * (d / 0.5) * (c sin(az) cos(el) + r sin(el))`, `d` the spacing in
//! wavelengths: azimuth runs along the columns, elevation along the rows.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, MessageSubset};
use crate::error::{check_dim, invalid, Result};
use crate::matrix::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl RisGeometry {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("RIS needs at least one row and one column");
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return invalid(format!("element spacing must be positive, got {spacing}"));
        }
        Ok(Self { rows, cols, spacing })
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }
}

/// Azimuth/elevation pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&azimuth) || !(-90.0..=90.0).contains(&elevation) {
            return invalid(format!("direction ({azimuth}, {elevation}) outside [-90, 90]^2"));
        }
        Ok(Self { azimuth, elevation })
    }

    pub const BROADSIDE: Direction = Direction {
        azimuth: 0.0,
        elevation: 0.0,
    };

    /// Uniform `n_az x n_el` grid, azimuth-major.
    pub fn grid(az: (f64, f64), n_az: usize, el: (f64, f64), n_el: usize) -> Result<Vec<Direction>> {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            match n {
                0 => vec![],
                1 => vec![lo],
                _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            }
        };
        let mut out = Vec::with_capacity(n_az * n_el);
        for a in axis(az, n_az) {
            for e in axis(el, n_el) {
                out.push(Direction::new(a, e)?);
            }
        }
        Ok(out)
    }
}

/// Unit-modulus RIS steering vector toward `direction`.
pub fn steering_vector(geometry: &RisGeometry, direction: Direction) -> Vec<Complex64> {
    let scale = std::f64::consts::PI * geometry.spacing / 0.5;
    let (az, el) = (direction.azimuth.to_radians(), direction.elevation.to_radians());
    let horizontal = scale * az.sin() * el.cos();
    let vertical = scale * el.sin();
    let mut out = Vec::with_capacity(geometry.elements());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            out.push(Complex64::from_polar(1.0, c as f64 * horizontal + r as f64 * vertical));
        }
    }
    out
}

/// `N` disjoint, equally sized element sets covering the aperture. Member
/// lists hold 0-based element indices in the order `mu_{n,1}, ..., mu_{n,M}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubarrayPartition {
    members: Vec<Vec<usize>>,
    total: usize,
}

impl SubarrayPartition {
    pub fn from_members(members: Vec<Vec<usize>>, total: usize) -> Result<Self> {
        if members.is_empty() {
            return invalid("partition needs at least one subarray");
        }
        let size = members[0].len();
        if size == 0 || members.iter().any(|m| m.len() != size) {
            return invalid("subarrays must be nonempty and of equal size");
        }
        let mut seen = vec![false; total];
        for &m in members.iter().flatten() {
            if m >= total || std::mem::replace(&mut seen[m], true) {
                return invalid(format!("element {m} is out of range or assigned twice"));
            }
        }
        if seen.iter().any(|s| !s) {
            return invalid("partition does not cover every element");
        }
        Ok(Self { members, total })
    }

    /// Number of subarrays `N`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Elements per subarray `M`.
    pub fn subarray_size(&self) -> usize {
        self.members[0].len()
    }

    pub fn total_elements(&self) -> usize {
        self.total
    }

    pub fn members(&self, n: usize) -> &[usize] {
        &self.members[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    /// `P_n^T v`: the entries of a full-aperture vector that belong to subarray `n`.
    pub fn restrict(&self, n: usize, v: &[Complex64]) -> Vec<Complex64> {
        self.members[n].iter().map(|&m| v[m]).collect()
    }
}

/// `tile_rows x tile_cols` contiguous rectangular tiles, numbered row-major.
pub fn grid_partition(geometry: &RisGeometry, tile_rows: usize, tile_cols: usize) -> Result<SubarrayPartition> {
    if tile_rows == 0
        || tile_cols == 0
        || !geometry.rows.is_multiple_of(tile_rows)
        || !geometry.cols.is_multiple_of(tile_cols)
    {
        return invalid(format!(
            "{}x{} RIS cannot be tiled into {tile_rows}x{tile_cols} subarrays",
            geometry.rows, geometry.cols
        ));
    }
    let (h, w) = (geometry.rows / tile_rows, geometry.cols / tile_cols);
    let mut members = Vec::with_capacity(tile_rows * tile_cols);
    for tr in 0..tile_rows {
        for tc in 0..tile_cols {
            let mut set = Vec::with_capacity(h * w);
            for r in tr * h..(tr + 1) * h {
                for c in tc * w..(tc + 1) * w {
                    set.push(r * geometry.cols + c);
                }
            }
            members.push(set);
        }
    }
    SubarrayPartition::from_members(members, geometry.elements())
}

/// `tiles_per_side^2` square-ish tiles.
pub fn square_partition(geometry: &RisGeometry, tiles_per_side: usize) -> Result<SubarrayPartition> {
    grid_partition(geometry, tiles_per_side, tiles_per_side)
}

/// Tiles the aperture into `n` rectangles, preferring the most square tiling.
pub fn partition_into(geometry: &RisGeometry, n: usize) -> Result<SubarrayPartition> {
    let mut best: Option<(usize, usize)> = None;
    for tr in 1..=n {
        if !n.is_multiple_of(tr) {
            continue;
        }
        let tc = n / tr;
        if !geometry.rows.is_multiple_of(tr) || !geometry.cols.is_multiple_of(tc) {
            continue;
        }
        let skew = tr.abs_diff(tc);
        if best.is_none_or(|(br, bc)| skew < br.abs_diff(bc)) {
            best = Some((tr, tc));
        }
    }
    match best {
        Some((tr, tc)) => grid_partition(geometry, tr, tc),
        None => invalid(format!(
            "{}x{} RIS cannot be tiled into {n} equal rectangular subarrays",
            geometry.rows, geometry.cols
        )),
    }
}

/// Spatial beamformers `b_n`, one per subarray.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub vectors: Vec<Vec<Complex64>>,
}

/// `b_n = P_n^T (psi(theta_st) .* psi(theta_bar))`: with `gamma_st` along
/// `psi(theta_st)` every element adds in phase toward `theta_bar`.
pub fn matched_beamformers(
    partition: &SubarrayPartition,
    geometry: &RisGeometry,
    theta_st: Direction,
    theta_bar: Direction,
) -> BeamformerSet {
    let st = steering_vector(geometry, theta_st);
    let bar = steering_vector(geometry, theta_bar);
    let product: Vec<Complex64> = st.iter().zip(&bar).map(|(a, b)| a * b).collect();
    BeamformerSet {
        vectors: (0..partition.len()).map(|n| partition.restrict(n, &product)).collect(),
    }
}

/// The `L x M_RIS` unit-modulus RIS response over one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeCode {
    pub matrix: CMatrix,
    /// Codeword index (1-based) driving each subarray.
    pub assignment: Vec<usize>,
}

/// `X = sum_n c_n (P_n b_n)^H`, built column by column: element `mu_{n,j}`
/// gets `c_n * conj(b_n[j])`.
///
/// `assignment[n]` is the codeword for subarray `n` and must be a permutation
/// of `subset`; `None` assigns ascending codewords to ascending subarrays.
pub fn space_time_code(
    codebook: &Codebook,
    subset: &MessageSubset,
    assignment: Option<&[usize]>,
    partition: &SubarrayPartition,
    beamformers: &BeamformerSet,
) -> Result<SpaceTimeCode> {
    let assignment = resolve_assignment(subset, assignment, partition)?;
    check_dim("beamformer count", partition.len(), beamformers.vectors.len())?;
    let l = codebook.length();
    let mut x = CMatrix::zeros(l, partition.total_elements());
    for (n, (members, b)) in partition.iter().zip(&beamformers.vectors).enumerate() {
        check_dim("beamformer length", members.len(), b.len())?;
        let c = codebook.codeword(assignment[n]);
        for (&m, bj) in members.iter().zip(b) {
            let w = bj.conj();
            for (row, cl) in c.iter().enumerate() {
                x.set(row, m, cl * w);
            }
        }
    }
    Ok(SpaceTimeCode { matrix: x, assignment })
}

/// Same matrix accumulated literally as the sum of `N` outer products.
pub fn space_time_code_by_sum(
    codebook: &Codebook,
    subset: &MessageSubset,
    assignment: Option<&[usize]>,
    partition: &SubarrayPartition,
    beamformers: &BeamformerSet,
) -> Result<CMatrix> {
    let assignment = resolve_assignment(subset, assignment, partition)?;
    let total = partition.total_elements();
    let mut x = CMatrix::zeros(codebook.length(), total);
    for (n, b) in beamformers.vectors.iter().enumerate() {
        // P_n b_n embedded in the full aperture
        let mut embedded = vec![Complex64::new(0.0, 0.0); total];
        for (&m, bj) in partition.members(n).iter().zip(b) {
            embedded[m] = *bj;
        }
        let c = codebook.codeword(assignment[n]);
        for (row, cl) in c.iter().enumerate() {
            for (m, e) in embedded.iter().enumerate() {
                let v = x.get(row, m) + cl * e.conj();
                x.set(row, m, v);
            }
        }
    }
    Ok(x)
}

fn resolve_assignment(
    subset: &MessageSubset,
    assignment: Option<&[usize]>,
    partition: &SubarrayPartition,
) -> Result<Vec<usize>> {
    check_dim("subset size vs subarray count", partition.len(), subset.len())?;
    match assignment {
        None => Ok(subset.indices().to_vec()),
        Some(a) => {
            check_dim("assignment length", subset.len(), a.len())?;
            let mut sorted = a.to_vec();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return invalid("assignment uses a codeword twice");
            }
            if sorted != subset.indices() {
                return invalid("assignment is not a permutation of the message subset");
            }
            Ok(a.to_vec())
        }
    }
}

/// Closed-form beampattern `B(theta) = L sum_n |(gamma_st .* psi(theta))^H P_n b_n|^2`.
pub fn beampattern(
    frame_length: usize,
    beamformers: &BeamformerSet,
    partition: &SubarrayPartition,
    geometry: &RisGeometry,
    gamma_st: &[Complex64],
    directions: &[Direction],
) -> Result<Vec<f64>> {
    check_dim("gamma_st length", geometry.elements(), gamma_st.len())?;
    check_dim("partition size", geometry.elements(), partition.total_elements())?;
    check_dim("beamformer count", partition.len(), beamformers.vectors.len())?;
    Ok(directions
        .iter()
        .map(|&d| {
            let psi = steering_vector(geometry, d);
            let illum: Vec<Complex64> = gamma_st.iter().zip(&psi).map(|(g, p)| g * p).collect();
            let sum: f64 = partition
                .iter()
                .zip(&beamformers.vectors)
                .map(|(members, b)| {
                    members
                        .iter()
                        .zip(b)
                        .map(|(&m, bj)| illum[m].conj() * bj)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            frame_length as f64 * sum
        })
        .collect())
}

/// `||X (gamma_st .* psi(theta))||^2` from an explicit code matrix.
pub fn beampattern_explicit(
    code: &SpaceTimeCode,
    geometry: &RisGeometry,
    gamma_st: &[Complex64],
    directions: &[Direction],
) -> Result<Vec<f64>> {
    check_dim("gamma_st length", geometry.elements(), gamma_st.len())?;
    check_dim("code matrix columns", geometry.elements(), code.matrix.cols())?;
    directions
        .iter()
        .map(|&d| {
            let psi = steering_vector(geometry, d);
            let illum: Vec<Complex64> = gamma_st.iter().zip(&psi).map(|(g, p)| g * p).collect();
            Ok(code.matrix.mul_vec(&illum)?.iter().map(|v| v.norm_sqr()).sum())
        })
        .collect()
}
