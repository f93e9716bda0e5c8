//! State representations on the strip and the transforms between them,
//! plus the binary snapshot container.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{self, check_dims, Field};
use crate::grid::StripGrid;
use crate::wave::WaveTable;

/// Antiderivative perturbation fields `(phi1, phi2, psi)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbState {
    pub grid: StripGrid,
    pub t: f64,
    pub phi1: Field,
    pub phi2: Field,
    pub psi: Field,
}

impl PerturbState {
    pub fn zeros(grid: &StripGrid) -> Self {
        let shape = grid.shape();
        Self {
            grid: grid.clone(),
            t: 0.0,
            phi1: Field::zeros(shape),
            phi2: Field::zeros(shape),
            psi: Field::zeros(shape),
        }
    }

    pub fn fields(&self) -> [&Field; 3] {
        [&self.phi1, &self.phi2, &self.psi]
    }

    /// Largest field magnitude inside the z-boundary buffer zone; the decay
    /// class built into the perturbation ansatz requires this to stay
    /// negligible relative to [`Self::sup`].
    pub fn buffer_magnitude(&self) -> f64 {
        let mut worst = 0.0f64;
        for f in self.fields() {
            for i in 0..self.grid.nz {
                if self.grid.in_buffer(i) {
                    for j in 0..self.grid.ny {
                        worst = worst.max(f[(i, j)].abs());
                    }
                }
            }
        }
        worst
    }

    pub fn sup(&self) -> f64 {
        self.fields().iter().map(|f| field::sup_norm(f)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|f| f.iter().all(|x| x.is_finite()))
    }
}

/// Physical fields in one of the two primitive representations.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveFields {
    /// Transformed system: density and the chemical-gradient vector.
    Np { n: Field, p1: Field, p2: Field },
    /// Log-chemical system: density and `log c`.
    Nc { n: Field, log_c: Field },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState {
    pub grid: StripGrid,
    pub t: f64,
    pub fields: PrimitiveFields,
}

impl PrimitiveState {
    pub fn n(&self) -> &Field {
        match &self.fields {
            PrimitiveFields::Np { n, .. } | PrimitiveFields::Nc { n, .. } => n,
        }
    }

    pub fn field_list(&self) -> Vec<&Field> {
        match &self.fields {
            PrimitiveFields::Np { n, p1, p2 } => vec![n, p1, p2],
            PrimitiveFields::Nc { n, log_c } => vec![n, log_c],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.field_list().iter().all(|f| f.iter().all(|x| x.is_finite()))
    }
}

/// `p = -grad(log c)`: the singular chemotactic quotient becomes polynomial.
pub fn cole_hopf_forward(log_c: &Field, grid: &StripGrid) -> Result<(Field, Field)> {
    let (gz, gy) = field::grad(log_c, grid)?;
    Ok((-gz, -gy))
}

/// Default curl threshold for [`cole_hopf_inverse`], relative to the
/// cross-derivative magnitude. A discrete gradient keeps the relative curl at
/// stencil-truncation size; corrupted states show order-one values.
pub const CURL_TOLERANCE: f64 = 0.25;

/// Invert `p = -grad(log c)` by path integration: along z at `y = 0`, then
/// along y, anchored so the node `(z_max, y = 0)` carries `anchor`. Rejects
/// inputs whose discrete curl says they are not a gradient.
pub fn cole_hopf_inverse(
    p1: &Field,
    p2: &Field,
    anchor: f64,
    grid: &StripGrid,
    curl_tol: f64,
) -> Result<Field> {
    check_dims(p1, grid)?;
    check_dims(p2, grid)?;
    let (nz, ny) = grid.shape();

    let dz_p2 = field::dz1(p2, grid)?;
    let dy_p1 = field::dy1(p1, grid)?;
    let mut max_curl = 0.0f64;
    let mut cross_scale = 0.0f64;
    for i in 1..nz - 1 {
        for j in 0..ny {
            max_curl = max_curl.max((dz_p2[(i, j)] - dy_p1[(i, j)]).abs());
            cross_scale = cross_scale.max(dz_p2[(i, j)].abs()).max(dy_p1[(i, j)].abs());
        }
    }
    // the floor absorbs differencing roundoff (planar data has zero cross
    // scale but not exactly zero stencil noise)
    let noise = 64.0 * f64::EPSILON * (field::sup_norm(p1) + field::sup_norm(p2))
        / grid.dz.min(grid.dy);
    let threshold = curl_tol * cross_scale + noise;
    if max_curl > threshold {
        return Err(Error::CurlViolation {
            max_curl,
            threshold,
        });
    }

    let mut log_c = Field::zeros((nz, ny));
    log_c[(nz - 1, 0)] = anchor;
    // log_c_z = -p1 along y = 0, trapezoid from the right
    for i in (0..nz - 1).rev() {
        log_c[(i, 0)] = log_c[(i + 1, 0)] + 0.5 * grid.dz * (p1[(i, 0)] + p1[(i + 1, 0)]);
    }
    // log_c_y = -p2 along each row
    for i in 0..nz {
        for j in 0..ny - 1 {
            log_c[(i, j + 1)] = log_c[(i, j)] - 0.5 * grid.dy * (p2[(i, j)] + p2[(i, j + 1)]);
        }
    }
    Ok(log_c)
}

/// `n = N + div(phi)`, `p = (P, 0) + grad(psi)`. Negative density is reported
/// through the returned minimum, never clamped.
pub fn reconstruct_primitive(
    perturb: &PerturbState,
    wave: &WaveTable,
) -> Result<(PrimitiveState, f64)> {
    let grid = &perturb.grid;
    if wave.z.len() != grid.nz {
        return Err(Error::DimensionMismatch {
            expected: (grid.nz, 0),
            found: (wave.z.len(), 0),
        });
    }
    let mut n = field::div(&perturb.phi1, &perturb.phi2, grid)?;
    let (mut p1, p2) = field::grad(&perturb.psi, grid)?;
    for i in 0..grid.nz {
        for j in 0..grid.ny {
            n[(i, j)] += wave.n[i];
            p1[(i, j)] += wave.p[i];
        }
    }
    let min_n = n.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok((
        PrimitiveState {
            grid: grid.clone(),
            t: perturb.t,
            fields: PrimitiveFields::Np { n, p1, p2 },
        },
        min_n,
    ))
}

/// Derivative-level perturbation `(u, v) = (n - N, p - (P, 0))`. The
/// antiderivative `phi` is deliberately not recovered: the divergence
/// equation has a kernel and the perturbation class fixes it a priori.
pub fn extract_perturbation_gradient_part(
    primitive: &PrimitiveState,
    wave: &WaveTable,
) -> Result<(Field, Field, Field)> {
    let grid = &primitive.grid;
    let PrimitiveFields::Np { n, p1, p2 } = &primitive.fields else {
        return Err(Error::InvalidParams(
            "gradient-part extraction needs the (n, p) representation".into(),
        ));
    };
    let mut u = n.clone();
    let mut v1 = p1.clone();
    let v2 = p2.clone();
    for i in 0..grid.nz {
        for j in 0..grid.ny {
            u[(i, j)] -= wave.n[i];
            v1[(i, j)] -= wave.p[i];
        }
    }
    Ok((u, v1, v2))
}

// ---------------------------------------------------------------------------
// snapshot container: 64-byte ASCII header, then row-major little-endian f64

const MAGIC: &str = "KSWAVE1";
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Perturbation(PerturbState),
    Primitive(PrimitiveState),
}

impl Snapshot {
    pub fn t(&self) -> f64 {
        match self {
            Snapshot::Perturbation(s) => s.t,
            Snapshot::Primitive(s) => s.t,
        }
    }

    pub fn grid(&self) -> &StripGrid {
        match self {
            Snapshot::Perturbation(s) => &s.grid,
            Snapshot::Primitive(s) => &s.grid,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Snapshot::Perturbation(_) => "PT",
            Snapshot::Primitive(s) => match s.fields {
                PrimitiveFields::Np { .. } => "NP",
                PrimitiveFields::Nc { .. } => "NC",
            },
        }
    }

    fn fields(&self) -> Vec<&Field> {
        match self {
            Snapshot::Perturbation(s) => s.fields().to_vec(),
            Snapshot::Primitive(s) => s.field_list(),
        }
    }
}

fn format_header(tag: &str, grid: &StripGrid, t: f64) -> String {
    let mut header = format!(
        "{MAGIC} {tag} {:05} {:05} {:.6e} {:.6e} {:.8e}",
        grid.nz, grid.ny, grid.l_z, grid.lambda, t
    );
    assert!(
        header.len() < HEADER_LEN,
        "snapshot header overflow: {header:?}"
    );
    while header.len() < HEADER_LEN - 1 {
        header.push(' ');
    }
    header.push('\n');
    header
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let grid = snap.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(format_header(snap.tag(), grid, snap.t()).as_bytes())?;
    for f in snap.fields() {
        for i in 0..grid.nz {
            for j in 0..grid.ny {
                out.write_all(&f[(i, j)].to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    file.read_exact(&mut header)?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::Format("snapshot header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != MAGIC {
        return Err(Error::Format(format!("bad snapshot header: {header:?}")));
    }
    let tag = parts[1];
    let nz: usize = parts[2]
        .parse()
        .map_err(|_| Error::Format("bad nz in snapshot header".into()))?;
    let ny: usize = parts[3]
        .parse()
        .map_err(|_| Error::Format("bad ny in snapshot header".into()))?;
    let l_z: f64 = parts[4]
        .parse()
        .map_err(|_| Error::Format("bad l_z in snapshot header".into()))?;
    let lambda: f64 = parts[5]
        .parse()
        .map_err(|_| Error::Format("bad lambda in snapshot header".into()))?;
    let t: f64 = parts[6]
        .parse()
        .map_err(|_| Error::Format("bad time in snapshot header".into()))?;
    let grid = StripGrid::new(l_z, nz, lambda, ny)?;

    let n_fields = match tag {
        "PT" | "NP" => 3,
        "NC" => 2,
        other => return Err(Error::Format(format!("unknown snapshot tag {other:?}"))),
    };
    let mut fields = Vec::with_capacity(n_fields);
    let mut buf = vec![0u8; nz * ny * 8];
    for _ in 0..n_fields {
        file.read_exact(&mut buf)?;
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                let k = (i * ny + j) * 8;
                f[(i, j)] = f64::from_le_bytes(buf[k..k + 8].try_into().unwrap());
            }
        }
        fields.push(f);
    }
    let mut extra = [0u8; 1];
    if file.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after snapshot payload".into()));
    }

    Ok(match tag {
        "PT" => Snapshot::Perturbation(PerturbState {
            grid,
            t,
            phi1: fields.remove(0),
            phi2: fields.remove(0),
            psi: fields.remove(0),
        }),
        "NP" => Snapshot::Primitive(PrimitiveState {
            grid,
            t,
            fields: PrimitiveFields::Np {
                n: fields.remove(0),
                p1: fields.remove(0),
                p2: fields.remove(0),
            },
        }),
        _ => Snapshot::Primitive(PrimitiveState {
            grid,
            t,
            fields: PrimitiveFields::Nc {
                n: fields.remove(0),
                log_c: fields.remove(0),
            },
        }),
    })
}

/// Plain-text dump for small grids: `z,y,value` per row.
pub fn write_field_csv(path: &Path, f: &Field, grid: &StripGrid) -> Result<()> {
    check_dims(f, grid)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "z,y,value")?;
    for i in 0..grid.nz {
        for j in 0..grid.ny {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", grid.z(i), grid.y(j), f[(i, j)])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{explicit_wave_eps0_on_nodes, WaveProfile};

    fn grid() -> StripGrid {
        StripGrid::new(6.0, 65, 0.8, 12).unwrap()
    }

    fn wave_on(grid: &StripGrid) -> WaveTable {
        let profile: WaveProfile =
            explicit_wave_eps0_on_nodes(1.0, 1.0, &grid.z_nodes()).unwrap();
        WaveTable::from_profile(&profile)
    }

    fn smooth(grid: &StripGrid, k: f64) -> Field {
        let (nz, ny) = grid.shape();
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            let z = grid.z(i);
            for j in 0..ny {
                let y = grid.y(j);
                f[(i, j)] =
                    (-z * z).exp() * (k * 2.0 * std::f64::consts::PI * y / grid.lambda).cos();
            }
        }
        f
    }

    #[test]
    fn forward_transform_of_constant_is_zero() {
        let g = grid();
        let logc = Field::from_elem(g.shape(), 0.37);
        let (p1, p2) = cole_hopf_forward(&logc, &g).unwrap();
        assert!(field::sup_norm(&p1) < 1e-13); // one-sided rows cancel to roundoff
        assert_eq!(field::sup_norm(&p2), 0.0);
    }

    #[test]
    fn forward_transform_of_wave_chemical_matches_profile() {
        let g = grid();
        let wave = wave_on(&g);
        let (nz, ny) = g.shape();
        let mut logc = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                logc[(i, j)] = wave.log_c[i];
            }
        }
        let (p1, p2) = cole_hopf_forward(&logc, &g).unwrap();
        assert_eq!(field::sup_norm(&p2), 0.0);
        let mut worst = 0.0f64;
        for i in 1..nz - 1 {
            for j in 0..ny {
                worst = worst.max((p1[(i, j)] - wave.p[i]).abs());
            }
        }
        assert!(worst < 2e-3, "p1 vs wave P: {worst}"); // centered-stencil floor at dz ~ 0.19
    }

    #[test]
    fn inverse_of_zero_is_anchor() {
        let g = grid();
        let zero = Field::zeros(g.shape());
        let logc = cole_hopf_inverse(&zero, &zero, -1.25, &g, CURL_TOLERANCE).unwrap();
        for v in logc.iter() {
            assert!((v + 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_recovers_up_to_anchor() {
        // second-order convergence of inverse(forward(f)) toward f
        let mut errors = Vec::new();
        for &(nz, ny) in &[(65usize, 12usize), (129, 24)] {
            let g = StripGrid::new(6.0, nz, 0.8, ny).unwrap();
            let f = smooth(&g, 1.0);
            let (p1, p2) = cole_hopf_forward(&f, &g).unwrap();
            let anchor = f[(g.nz - 1, 0)];
            let back = cole_hopf_inverse(&p1, &p2, anchor, &g, CURL_TOLERANCE).unwrap();
            let mut worst = 0.0f64;
            for i in 0..g.nz {
                for j in 0..g.ny {
                    worst = worst.max((back[(i, j)] - f[(i, j)]).abs());
                }
            }
            errors.push(worst);
        }
        assert!(
            errors[1] * 3.0 <= errors[0] && errors[1] < 0.1,
            "round trip errors {errors:?}"
        );
    }

    #[test]
    fn injected_curl_is_rejected() {
        let g = grid();
        let f = smooth(&g, 1.0);
        let (p1, mut p2) = cole_hopf_forward(&f, &g).unwrap();
        let scale = field::sup_norm(&p2);
        for i in 0..g.nz {
            let z = g.z(i);
            for j in 0..g.ny {
                // z-dependent p2 at the field's own scale breaks the gradient structure
                p2[(i, j)] += scale * (-z * z).exp() * z;
            }
        }
        assert!(matches!(
            cole_hopf_inverse(&p1, &p2, 0.0, &g, CURL_TOLERANCE),
            Err(Error::CurlViolation { .. })
        ));
    }

    #[test]
    fn zero_perturbation_reconstructs_the_wave() {
        let g = grid();
        let wave = wave_on(&g);
        let zero = PerturbState::zeros(&g);
        let (prim, min_n) = reconstruct_primitive(&zero, &wave).unwrap();
        assert!(min_n > 0.0);
        let PrimitiveFields::Np { n, p1, p2 } = &prim.fields else {
            panic!()
        };
        for i in 0..g.nz {
            for j in 0..g.ny {
                assert_eq!(n[(i, j)], wave.n[i]);
                assert_eq!(p1[(i, j)], wave.p[i]);
                assert_eq!(p2[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn extraction_inverts_reconstruction() {
        let g = grid();
        let wave = wave_on(&g);
        let mut state = PerturbState::zeros(&g);
        state.psi = smooth(&g, 1.0);
        state.phi1 = smooth(&g, 2.0);
        let (prim, _) = reconstruct_primitive(&state, &wave).unwrap();
        let (u, v1, v2) = extract_perturbation_gradient_part(&prim, &wave).unwrap();
        let du = field::div(&state.phi1, &state.phi2, &g).unwrap();
        let (gz, gy) = field::grad(&state.psi, &g).unwrap();
        for i in 0..g.nz {
            for j in 0..g.ny {
                assert!((u[(i, j)] - du[(i, j)]).abs() < 1e-14);
                assert!((v1[(i, j)] - gz[(i, j)]).abs() < 1e-14);
                assert!((v2[(i, j)] - gy[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn snapshot_round_trip_all_tags() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let mut pert = PerturbState::zeros(&g);
        pert.t = 1.5;
        pert.phi1 = smooth(&g, 1.0);
        pert.psi = smooth(&g, 2.0);
        let snaps = [
            Snapshot::Perturbation(pert),
            Snapshot::Primitive(PrimitiveState {
                grid: g.clone(),
                t: 0.25,
                fields: PrimitiveFields::Np {
                    n: smooth(&g, 0.0),
                    p1: smooth(&g, 1.0),
                    p2: Field::zeros(g.shape()),
                },
            }),
            Snapshot::Primitive(PrimitiveState {
                grid: g.clone(),
                t: 0.5,
                fields: PrimitiveFields::Nc {
                    n: smooth(&g, 0.0),
                    log_c: smooth(&g, 3.0),
                },
            }),
        ];
        for (k, snap) in snaps.iter().enumerate() {
            let path = dir.path().join(format!("snap_{k}.fld"));
            write_snapshot(&path, snap).unwrap();
            let loaded = read_snapshot(&path).unwrap();
            assert_eq!(snap.tag(), match &loaded {
                Snapshot::Perturbation(_) => "PT",
                Snapshot::Primitive(s) => match s.fields {
                    PrimitiveFields::Np { .. } => "NP",
                    PrimitiveFields::Nc { .. } => "NC",
                },
            });
            assert!((snap.t() - loaded.t()).abs() < 1e-8 * (1.0 + snap.t().abs()));
            let a = snap.fields();
            let b = loaded.fields();
            for (fa, fb) in a.iter().zip(&b) {
                assert_eq!(fa, fb);
            }
        }
    }

    #[test]
    fn snapshot_header_is_exactly_64_bytes() {
        let g = grid();
        let h = format_header("PT", &g, 12.25);
        assert_eq!(h.len(), HEADER_LEN);
        assert!(h.ends_with('\n'));
    }

    #[test]
    fn field_csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let f = smooth(&g, 1.0);
        let path = dir.path().join("field.csv");
        write_field_csv(&path, &f, &g).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("z,y,value"));
        assert_eq!(text.lines().count(), 1 + g.nz * g.ny);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let path = dir.path().join("snap.fld");
        write_snapshot(&path, &Snapshot::Perturbation(PerturbState::zeros(&g))).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
