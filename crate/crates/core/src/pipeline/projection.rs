//! Two-dimensional PCA projection of the fused representations, exported as
//! CSV and an SVG scatter plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::train::TrainedModel;
use crate::error::{Error, Result};
use crate::fuse::LABEL_FAKE;
use crate::numerics::{dot, RngState};
use crate::parallel::Execution;

pub const POWER_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 20_000;

/// Leading principal directions of a point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit vectors; zero vectors when the covariance rank ran out.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalue of each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

fn matvec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Flips `v` so its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sample covariance (n − 1 denominator) of the centered rows.
pub fn covariance(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Degenerate("no points to project".into()));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Degenerate("points have differing dimensions".into()));
    }
    let mut mean = vec![0.0; p];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x / n as f64);
    }
    let denom = (n.max(2) - 1) as f64;
    let mut cov = vec![vec![0.0; p]; p];
    for r in rows {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..p {
            for j in i..p {
                cov[i][j] += c[i] * c[j] / denom;
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            cov[i][j] = cov[j][i];
        }
    }
    Ok((mean, cov))
}

/// Top-`k` eigenpairs of the covariance of `rows` by power iteration with
/// deflation. Components beyond the numerical rank are zero.
pub fn pca(rows: &[Vec<f64>], k: usize, tol: f64) -> Result<Pca> {
    let (mean, mut cov) = covariance(rows)?;
    let p = mean.len();
    let total_variance: f64 = (0..p).map(|i| cov[i][i]).sum();
    let floor = 1e-12 * total_variance.max(f64::MIN_POSITIVE);
    let mut rng = RngState::new(0x5eed);
    let mut components = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = rng.normal_vec(p, 1.0);
        normalize(&mut v);
        let mut lambda = 0.0;
        let mut converged = false;
        for _ in 0..MAX_ITERS {
            let mut w = matvec(&cov, &v);
            lambda = normalize(&mut w);
            if lambda <= floor {
                break;
            }
            let same = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let flip = w.iter().zip(&v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            v = w;
            if same.min(flip) < tol {
                converged = true;
                break;
            }
        }
        if lambda <= floor {
            components.push(vec![0.0; p]);
            variances.push(0.0);
            continue;
        }
        if !converged {
            log::warn!("power iteration stopped after {MAX_ITERS} steps without reaching {tol}");
        }
        // Deflation by an approximate vector leaks a little of it back in.
        for c in &components {
            let overlap = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= overlap * y);
        }
        normalize(&mut v);
        canonical_sign(&mut v);
        let cv = matvec(&cov, &v);
        let lambda = dot(&v, &cv);
        for i in 0..p {
            for j in 0..p {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        variances.push(lambda);
    }
    Ok(Pca {
        mean,
        components,
        variances,
        total_variance,
    })
}

impl Pca {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter().map(|v| dot(v, &c)).collect()
    }

    /// Share of the total variance carried by each component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    pub explained_ratio: [f64; 2],
}

/// Projects the pre-classifier fused vector of every item.
pub fn project_dataset(model: &TrainedModel, data: &Dataset, exec: Execution) -> Result<Projection> {
    let rows: Vec<Vec<f64>> = model
        .forward_all(data, exec)?
        .into_iter()
        .map(|f| f.fusion.fused.into_data())
        .collect();
    let pca = pca(&rows, 2, POWER_TOL)?;
    let points = rows
        .iter()
        .zip(&data.items)
        .map(|(r, item)| {
            let xy = pca.project(r);
            ProjectedPoint {
                id: item.id.clone(),
                x: xy[0],
                y: xy[1],
                label: item.label,
            }
        })
        .collect();
    let ratio = pca.explained_ratio();
    Ok(Projection {
        points,
        explained_ratio: [ratio[0], ratio[1]],
    })
}

pub fn to_csv(points: &[ProjectedPoint]) -> String {
    let mut s = String::from("id,x,y,label\n");
    for p in points {
        let id = if p.id.contains([',', '"', '\n']) {
            format!("\"{}\"", p.id.replace('"', "\"\""))
        } else {
            p.id.clone()
        };
        writeln!(s, "{id},{},{},{}", p.x, p.y, p.label).expect("string write");
    }
    s
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained scatter plot, real in blue and fake in red.
pub fn to_svg(projection: &Projection, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 48.0;
    let pts = &projection.points;
    let range = |f: fn(&ProjectedPoint) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let (x0, x1) = range(|p| p.x);
    let (y0, y1) = range(|p| p.y);
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape_xml(title)).unwrap();
    writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    )
    .unwrap();
    let [r1, r2] = projection.explained_ratio;
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">PC1 ({:.1}%)</text>"#, W / 2.0, H - 14.0, 100.0 * r1).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">PC2 ({:.1}%)</text>"#,
        H / 2.0,
        H / 2.0,
        100.0 * r2
    )
    .unwrap();
    for p in pts {
        let color = if p.label == LABEL_FAKE { "#d62728" } else { "#1f77b4" };
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"><title>{}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            escape_xml(&p.id)
        )
        .unwrap();
    }
    for (i, (name, color)) in [("real", "#1f77b4"), ("fake", "#d62728")].into_iter().enumerate() {
        let y = M + 16.0 + 18.0 * i as f64;
        writeln!(s, r#"<circle cx="{}" cy="{y}" r="5" fill="{color}"/>"#, W - M - 60.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, W - M - 48.0, y + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `projection.csv` and `projection.svg` into `dir`.
pub fn export_projection(
    model: &TrainedModel,
    data: &Dataset,
    dir: &Path,
    exec: Execution,
) -> Result<Projection> {
    let projection = project_dataset(model, data, exec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("projection.csv");
    fs::write(&csv, to_csv(&projection.points)).map_err(|e| Error::io(&csv, e))?;
    let svg = dir.join("projection.svg");
    let title = format!("Fused representations, {} split", data.split);
    fs::write(&svg, to_svg(&projection, &title)).map_err(|e| Error::io(&svg, e))?;
    Ok(projection)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_corners_keep_distance_order() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0], vec![2.0, 1.0]];
        let p = pca(&pts, 2, POWER_TOL).unwrap();
        let proj: Vec<Vec<f64>> = pts.iter().map(|x| p.project(x)).collect();
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        for i in 0..4 {
            for j in 0..4 {
                assert!((d(&pts[i], &pts[j]) - d(&proj[i], &proj[j])).abs() < 1e-9);
            }
        }
        assert!(p.variances[0] >= p.variances[1]);
    }

    #[test]
    fn rank_deficient_pads_zeros() {
        let pts = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![3.0, 6.0, 9.0]];
        let p = pca(&pts, 2, POWER_TOL).unwrap();
        assert!(p.variances[0] > 0.0);
        assert_eq!(p.variances[1], 0.0);
        assert_eq!(p.components[1], vec![0.0; 3]);
        assert_eq!(p.project(&pts[0])[1], 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let pts = vec![ProjectedPoint { id: "a,b".into(), x: 1.5, y: -2.0, label: 1 }];
        assert_eq!(to_csv(&pts), "id,x,y,label\n\"a,b\",1.5,-2,1\n");
    }

    #[test]
    fn svg_has_one_circle_per_point_plus_legend() {
        let pts = (0..5)
            .map(|i| ProjectedPoint { id: format!("p{i}"), x: i as f64, y: 0.0, label: (i % 2) as u8 })
            .collect();
        let svg = to_svg(&Projection { points: pts, explained_ratio: [0.9, 0.1] }, "t<1>");
        assert_eq!(svg.matches("<circle").count(), 7);
        assert!(svg.contains("t&lt;1&gt;"));
    }
}
