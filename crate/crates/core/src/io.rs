//! TOML documents: system descriptions, Lyapunov families, certificates and
//! oracle reports. Polynomials are stored as strings in the parser grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::certify::{CertificationConfig, CertificationResult};
use crate::error::{Error, Result};
use crate::oracle::OracleReport;
use crate::poly::{parse_in, PolyVector, Polynomial, DISPLAY_CLEANUP};
use crate::system::{BoundaryVariety, BoxDomain, SemiAlgebraicRegion, SubsystemDynamics, SwitchedSystem};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn toml_error(context: &str, text: &str, e: toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |k| k + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        context: format!("{context} line {line}"),
        column,
        message: e.message().trim().to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDoc {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chi: Option<String>,
    #[serde(default)]
    xi: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    witnesses: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    i: usize,
    j: usize,
    chi: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    witnesses: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    #[serde(default)]
    name: String,
    dimension: usize,
    #[serde(default)]
    origin_regions: Vec<usize>,
    #[serde(rename = "box")]
    bounds: BoxDoc,
    regions: Vec<RegionDoc>,
    #[serde(default)]
    boundaries: Vec<BoundaryDoc>,
    /// Region id -> list of vertex fields, each a list of component strings.
    dynamics: BTreeMap<String, Vec<Vec<String>>>,
}

fn region_key(key: &str, context: &str) -> Result<usize> {
    key.trim()
        .parse()
        .map_err(|_| Error::Document(format!("{context}: region key {key:?} is not an integer")))
}

/// Parses a system document; `context` names the source in error messages.
pub fn parse_system(text: &str, context: &str) -> Result<SwitchedSystem> {
    let doc: SystemDoc = toml::from_str(text).map_err(|e| toml_error(context, text, e))?;
    let n = doc.dimension;
    if n == 0 {
        return Err(Error::Document(format!("{context}: dimension must be positive")));
    }
    let poly = |s: &str, at: String| parse_in(s, n, &format!("{context} {at}"));
    let bounds = BoxDomain::new(doc.bounds.lo, doc.bounds.hi)?;
    let mut regions = Vec::new();
    for (k, r) in doc.regions.iter().enumerate() {
        let chi = match &r.chi {
            Some(s) => poly(s, format!("regions[{k}].chi"))?,
            None => Polynomial::zero(n),
        };
        let xi = r
            .xi
            .iter()
            .enumerate()
            .map(|(m, s)| poly(s, format!("regions[{k}].xi[{m}]")))
            .collect::<Result<Vec<_>>>()?;
        regions.push(SemiAlgebraicRegion {
            id: r.id,
            chi,
            xi,
            witnesses: r.witnesses.clone(),
        });
    }
    let mut boundaries = Vec::new();
    for (k, b) in doc.boundaries.iter().enumerate() {
        boundaries.push(BoundaryVariety {
            i: b.i,
            j: b.j,
            chi: poly(&b.chi, format!("boundaries[{k}].chi"))?,
            witnesses: b.witnesses.clone(),
        });
    }
    let mut dynamics = BTreeMap::new();
    for (key, vertices) in &doc.dynamics {
        let id = region_key(key, context)?;
        let mut fields = Vec::new();
        for (l, comps) in vertices.iter().enumerate() {
            if comps.len() != n {
                return Err(Error::Document(format!(
                    "{context}: dynamics.{key}[{l}] has {} components, expected {n}",
                    comps.len()
                )));
            }
            let parts = comps
                .iter()
                .enumerate()
                .map(|(c, s)| poly(s, format!("dynamics.{key}[{l}][{c}]")))
                .collect::<Result<Vec<_>>>()?;
            fields.push(PolyVector::new(parts)?);
        }
        dynamics.insert(id, SubsystemDynamics::new(fields)?);
    }
    let name = if doc.name.is_empty() {
        context.to_string()
    } else {
        doc.name
    };
    SwitchedSystem::new(
        name,
        bounds,
        regions,
        boundaries,
        dynamics,
        doc.origin_regions.into_iter().collect(),
    )
}

/// Reads a system file, returning it with the SHA-256 of its bytes.
pub fn read_system(path: &Path) -> Result<(SwitchedSystem, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Document(format!("cannot read {}: {e}", path.display())))?;
    let sys = parse_system(&text, &path.display().to_string())?;
    Ok((sys, sha256_hex(text.as_bytes())))
}

pub fn system_to_toml(sys: &SwitchedSystem) -> String {
    let doc = SystemDoc {
        name: sys.name.clone(),
        dimension: sys.dim(),
        origin_regions: sys.origin_regions().iter().copied().collect(),
        bounds: BoxDoc {
            lo: sys.bounds().lo.clone(),
            hi: sys.bounds().hi.clone(),
        },
        regions: sys
            .regions()
            .iter()
            .map(|r| RegionDoc {
                id: r.id,
                chi: (!r.chi.is_zero()).then(|| r.chi.to_string()),
                xi: r.xi.iter().map(|p| p.to_string()).collect(),
                witnesses: r.witnesses.clone(),
            })
            .collect(),
        boundaries: sys
            .boundaries()
            .iter()
            .map(|b| BoundaryDoc {
                i: b.i,
                j: b.j,
                chi: b.chi.to_string(),
                witnesses: b.witnesses.clone(),
            })
            .collect(),
        dynamics: sys
            .region_ids()
            .map(|id| {
                let d = sys.dynamics(id).expect("every region has dynamics");
                let v = d
                    .vertices()
                    .iter()
                    .map(|f| f.components().iter().map(|p| p.to_string()).collect())
                    .collect();
                (id.to_string(), v)
            })
            .collect(),
    };
    toml::to_string(&doc).expect("system documents serialise")
}

/// Reads the `[lyapunov]` table of a document: one polynomial per region,
/// keyed by region id. Certificates carry the same table.
pub fn parse_lyapunov(text: &str, dim: usize, context: &str) -> Result<BTreeMap<usize, Polynomial>> {
    let table: Table = toml::from_str(text).map_err(|e| toml_error(context, text, e))?;
    let Some(Value::Table(lyap)) = table.get("lyapunov") else {
        return Err(Error::Document(format!("{context}: missing [lyapunov] table")));
    };
    let mut out = BTreeMap::new();
    for (key, v) in lyap {
        let id = region_key(key, context)?;
        let Value::String(s) = v else {
            return Err(Error::Document(format!("{context}: lyapunov.{key} must be a string")));
        };
        out.insert(id, parse_in(s, dim, &format!("{context} lyapunov.{key}"))?);
    }
    if out.is_empty() {
        return Err(Error::Document(format!("{context}: [lyapunov] table is empty")));
    }
    Ok(out)
}

pub fn lyapunov_to_toml(system: &str, family: &BTreeMap<usize, Polynomial>) -> String {
    let mut t = Table::new();
    t.insert("system".into(), Value::String(system.into()));
    t.insert("lyapunov".into(), Value::Table(family_table(family)));
    toml::to_string(&t).expect("tables serialise")
}

fn family_table(family: &BTreeMap<usize, Polynomial>) -> Table {
    family
        .iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect()
}

fn pair_key(p: (usize, usize)) -> String {
    format!("{}-{}", p.0, p.1)
}

fn pairs_value(pairs: &BTreeSet<(usize, usize)>) -> Value {
    Value::Array(
        pairs
            .iter()
            .map(|&(i, j)| Value::Array(vec![Value::Integer(i as i64), Value::Integer(j as i64)]))
            .collect(),
    )
}

fn floats(x: &[f64]) -> Value {
    Value::Array(x.iter().map(|v| Value::Float(*v)).collect())
}

fn config_table(cfg: &CertificationConfig) -> Table {
    let mut t = Table::new();
    t.insert("lyapunov_degree".into(), Value::Integer(cfg.lyapunov_degree.into()));
    t.insert("margin_mu".into(), Value::Float(cfg.margin_mu));
    t.insert("margin_nu".into(), Value::Float(cfg.margin_nu));
    t.insert("pd_epsilon".into(), Value::Float(cfg.pd_epsilon));
    t.insert("use_attractivity_filter".into(), Value::Boolean(cfg.use_attractivity_filter));
    t.insert("attractivity_kappa".into(), Value::Float(cfg.attractivity_kappa));
    if let Some(cap) = cfg.escalate_to {
        t.insert("escalate_to".into(), Value::Integer(cap.into()));
    }
    t.insert("backend".into(), Value::String(cfg.backend.clone()));
    t.insert("feasibility_tol".into(), Value::Float(cfg.solver.feasibility_tol));
    t.insert("oracle_tolerance".into(), Value::Float(cfg.oracle.tolerance));
    t.insert("oracle_seed".into(), Value::Integer(cfg.oracle.seed as i64));
    let md: Table = cfg
        .multiplier_degrees
        .iter()
        .map(|(k, v)| (k.clone(), Value::Integer((*v).into())))
        .collect();
    if !md.is_empty() {
        t.insert("multiplier_degrees".into(), Value::Table(md));
    }
    t
}

/// Oracle report as a TOML table (no timing information).
pub fn oracle_table(report: &OracleReport) -> Table {
    let mut t = Table::new();
    t.insert("verdict".into(), Value::String(report.verdict()));
    t.insert("passed".into(), Value::Boolean(report.passed()));
    t.insert("seed".into(), Value::Integer(report.seed as i64));
    t.insert("tolerance".into(), Value::Float(report.tolerance));
    t.insert("exclusion_radius".into(), Value::Float(report.exclusion_radius));
    t.insert(
        "warnings".into(),
        Value::Array(report.warnings.iter().map(|w| Value::String(w.clone())).collect()),
    );
    let records = report
        .records
        .iter()
        .map(|r| {
            let mut e = Table::new();
            e.insert("condition".into(), Value::String(r.condition.as_str().into()));
            e.insert("scope".into(), Value::String(r.scope.clone()));
            e.insert("passed".into(), Value::Boolean(r.passed));
            e.insert("samples".into(), Value::Integer(r.samples as i64));
            e.insert("worst_violation".into(), Value::Float(r.worst_violation));
            e.insert("worst_value".into(), Value::Float(r.worst_value));
            if let Some(p) = &r.worst_point {
                e.insert("worst_point".into(), floats(p));
            }
            Value::Table(e)
        })
        .collect();
    t.insert("records".into(), Value::Array(records));
    t
}

fn header(kind: &str, system: &str, system_hash: &str, manifest_hash: Option<&str>) -> Table {
    let mut t = Table::new();
    t.insert("document".into(), Value::String(kind.into()));
    t.insert("system".into(), Value::String(system.into()));
    t.insert("system_hash".into(), Value::String(system_hash.into()));
    if let Some(h) = manifest_hash {
        t.insert("manifest_hash".into(), Value::String(h.into()));
    }
    t
}

/// Certificate document: verdict, configuration, full-precision and cleaned
/// Lyapunov polynomials, gluing and multiplier polynomials, per-constraint
/// SOS evidence and the oracle report. Readable by [`parse_lyapunov`].
pub fn certificate_to_toml(
    result: &CertificationResult,
    cfg: &CertificationConfig,
    system: &str,
    system_hash: &str,
    manifest_hash: Option<&str>,
) -> String {
    let mut t = header("certificate", system, system_hash, manifest_hash);
    t.insert("verdict".into(), Value::String(result.verdict.as_str().into()));
    t.insert("degree".into(), Value::Integer(result.degree.into()));
    t.insert("solver_status".into(), Value::String(result.solver_status.as_str().into()));
    t.insert("detail".into(), Value::String(result.detail.clone()));
    t.insert("enforced_cross".into(), pairs_value(&result.enforced_cross));
    let mut sizes = Table::new();
    sizes.insert("psd_blocks".into(), Value::Integer(result.num_blocks as i64));
    sizes.insert("largest_block".into(), Value::Integer(result.largest_block as i64));
    sizes.insert("equality_rows".into(), Value::Integer(result.num_rows as i64));
    t.insert("problem".into(), Value::Table(sizes));
    if result.attempts.len() > 1 {
        let a = result
            .attempts
            .iter()
            .map(|(d, v)| {
                let mut e = Table::new();
                e.insert("degree".into(), Value::Integer((*d).into()));
                e.insert("verdict".into(), Value::String(v.as_str().into()));
                Value::Table(e)
            })
            .collect();
        t.insert("attempts".into(), Value::Array(a));
    }
    t.insert("config".into(), Value::Table(config_table(cfg)));
    let attr = result
        .attractivity
        .iter()
        .map(|a| {
            let mut e = Table::new();
            e.insert("pair".into(), Value::String(pair_key(a.pair)));
            e.insert("status".into(), Value::String(a.status.as_str().into()));
            e.insert("degree_cap".into(), Value::Integer(a.degree_cap.into()));
            let v = a
                .vertex_results
                .iter()
                .map(|r| Value::String(format!("{},{}: {}", r.vertex_i, r.vertex_j, r.status)))
                .collect();
            e.insert("vertex_pairs".into(), Value::Array(v));
            Value::Table(e)
        })
        .collect();
    t.insert("attractivity".into(), Value::Array(attr));

    if let Some(cert) = &result.certificate {
        t.insert("lyapunov".into(), Value::Table(family_table(&cert.lyapunov)));
        let cleaned: BTreeMap<usize, Polynomial> = cert
            .lyapunov
            .iter()
            .map(|(k, v)| (*k, v.cleaned(DISPLAY_CLEANUP)))
            .collect();
        t.insert("lyapunov_display".into(), Value::Table(family_table(&cleaned)));
        let glue: Table = cert
            .gluing
            .iter()
            .map(|(p, v)| (pair_key(*p), Value::String(v.to_string())))
            .collect();
        t.insert("gluing".into(), Value::Table(glue));
        let res: Table = cert
            .gluing_residuals
            .iter()
            .map(|(p, v)| (pair_key(*p), Value::Float(*v)))
            .collect();
        t.insert("gluing_residuals".into(), Value::Table(res));
        let mult: Table = cert
            .multipliers
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.to_string())))
            .collect();
        t.insert("multipliers".into(), Value::Table(mult));
        let evidence = cert
            .sos_evidence
            .iter()
            .map(|(label, ev)| {
                let mut e = Table::new();
                e.insert("constraint".into(), Value::String(label.clone()));
                e.insert("residual".into(), Value::Float(ev.residual_norm));
                e.insert("min_eigenvalue".into(), Value::Float(ev.worst_eigenvalue()));
                let blocks: Table = ev
                    .gram_blocks
                    .iter()
                    .map(|(id, g)| (id.clone(), Value::Integer(g.basis.len() as i64)))
                    .collect();
                e.insert("block_sizes".into(), Value::Table(blocks));
                Value::Table(e)
            })
            .collect();
        t.insert("evidence".into(), Value::Array(evidence));
        if let Some(rep) = &cert.oracle_report {
            t.insert("oracle".into(), Value::Table(oracle_table(rep)));
        }
    }
    toml::to_string(&t).expect("tables serialise")
}

/// Verification report document.
pub fn oracle_report_to_toml(
    report: &OracleReport,
    system: &str,
    system_hash: &str,
    lyapunov_hash: &str,
    manifest_hash: Option<&str>,
) -> String {
    let mut t = header("verification", system, system_hash, manifest_hash);
    t.insert("lyapunov_hash".into(), Value::String(lyapunov_hash.into()));
    t.insert("oracle".into(), Value::Table(oracle_table(report)));
    toml::to_string(&t).expect("tables serialise")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::library;

    #[test]
    fn system_round_trip() {
        let sys = library::quadrant_system();
        let text = system_to_toml(&sys);
        let back = parse_system(&text, "mem").unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.boundaries()[0].chi, sys.boundaries()[0].chi);
        assert_eq!(back.dynamics(1).unwrap().vertices(), sys.dynamics(1).unwrap().vertices());
        assert_eq!(back.origin_regions(), sys.origin_regions());
        assert_eq!(system_to_toml(&back), text);
    }

    #[test]
    fn bad_polynomial_names_its_location() {
        let text = system_to_toml(&library::quadrant_system()).replace("x1*x2\"", "x1*/x2\"");
        let err = parse_system(&text, "file.sys").unwrap_err().to_string();
        assert!(err.contains("file.sys"), "{err}");
        assert!(err.contains("column"), "{err}");
    }

    #[test]
    fn bad_toml_reports_line() {
        let err = parse_system("dimension = 2\nbox = [", "f.sys").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn lyapunov_round_trip() {
        let mut fam = BTreeMap::new();
        fam.insert(1, crate::poly::parse("0.98847*x1^6 + 1.23e-9*x2^2 - 3", 2).unwrap());
        fam.insert(2, crate::poly::parse("x1^2", 2).unwrap());
        let text = lyapunov_to_toml("s", &fam);
        assert_eq!(parse_lyapunov(&text, 2, "mem").unwrap(), fam);
        assert!(parse_lyapunov("[other]\n", 2, "mem").is_err());
    }
}
