//! TOML description files and construction of the objects they describe.
//!
//! Every validation problem in this module is a schema error: the caller maps
//! it to exit code 2. Mathematical failures are never raised here; they are
//! the business of the check suites.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, ensure, Context, Result};
use serde::Deserialize;

use vqg_core::bialg::{o_z2, FinBialgebra};
use vqg_core::borcherds::{
    joyce_rmatrix_lattice, lattice_vertex_engine, Bicharacter, JoyceData, LabelPairing, Lattice,
};
use vqg_core::borcherds::{heisenberg_vertex_engine, hlinear_lattice_engine};
use vqg_core::linalg::{tensor_key, BasisKey, StateVector};
use vqg_core::scalar::{Ring, Scalar};
use vqg_core::state_expr::StateContext;
use vqg_core::vertex::{holomorphic_engine, VertexEngine};

pub const KINDS: &[&str] = &[
    "finite-bialgebra",
    "holomorphic",
    "heisenberg",
    "lattice",
    "hlinear-lattice",
    "joyce-lattice",
];

/// One algebra description file. Unknown keys are rejected so that typos
/// surface as schema errors instead of silently ignored settings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpecFile {
    pub kind: String,
    pub truncation: u32,
    /// Default exponent window `[lo, hi)` for checks and expansions.
    pub window: Option<[i64; 2]>,
    /// Names of ring parameters; scalars may then mention them.
    #[serde(default)]
    pub params: Vec<String>,

    // Lattice family.
    pub kappa: Option<Vec<Vec<i64>>>,
    pub lambda_box: Option<i64>,
    pub max_weight: Option<i64>,

    // Finite bialgebra: structure constants as rows of indices plus a scalar.
    pub dim: Option<u32>,
    pub unit: Option<Vec<(u32, String)>>,
    pub counit: Option<Vec<String>>,
    pub product: Option<Vec<(u32, u32, u32, String)>>,
    pub coproduct: Option<Vec<(u32, u32, u32, String)>>,
    pub r: Option<Vec<(u32, u32, String)>>,

    // Holomorphic (polynomial) algebra.
    pub max_degree: Option<u32>,

    // Label algebra on top of a lattice.
    pub label: Option<String>,
    pub r_label: Option<Vec<(u32, u32, String)>>,

    // Wall-crossing style R-matrix data.
    pub rank: Option<usize>,
    pub tau: Option<String>,
    pub ext: Option<Vec<ExtRow>>,
}

/// One entry of the pairwise extension table: the head exponent `rk` plus
/// even and odd shift multisets.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtRow {
    pub i: usize,
    pub j: usize,
    pub rk: i64,
    #[serde(default)]
    pub even: Vec<i64>,
    #[serde(default)]
    pub odd: Vec<i64>,
}

/// A vertex engine together with the extras some suites need.
pub struct EngineModel {
    pub engine: VertexEngine,
    pub lattice: Option<Lattice>,
    pub ctx: StateContext,
}

/// What a description file builds to.
pub enum Model {
    Bialgebra {
        h: FinBialgebra,
        r: Option<StateVector>,
    },
    Engine(EngineModel),
    /// Only the braiding is described; checks run through the bicharacter.
    Joyce { bichar: Bicharacter, rank: usize },
}

pub fn load(path: &Path) -> Result<(SpecFile, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read input file {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).context("input file is not valid UTF-8")?;
    let spec: SpecFile = toml::from_str(text).context("invalid description file")?;
    ensure!(
        KINDS.contains(&spec.kind.as_str()),
        "unknown kind '{}' (expected one of {})",
        spec.kind,
        KINDS.join(", ")
    );
    ensure!(spec.truncation >= 1, "truncation must be at least 1");
    if let Some([lo, hi]) = spec.window {
        ensure!(lo < hi, "window must satisfy lo < hi, got [{lo}, {hi}]");
    }
    Ok((spec, bytes))
}

pub fn ring_of(spec: &SpecFile) -> Result<Ring> {
    if spec.params.is_empty() {
        Ok(Ring::rationals())
    } else {
        let names: Vec<&str> = spec.params.iter().map(String::as_str).collect();
        Ring::with_params(&names).map_err(|e| anyhow!("{e}"))
    }
}

/// Parses `p/q`, a parameter name, or a `*`-product of such factors with
/// optional integer powers, e.g. `-3/2*t^2`.
pub fn parse_scalar(ring: &Ring, text: &str) -> Result<Scalar> {
    let mut acc = ring.one();
    for raw in text.split('*') {
        let f = raw.trim();
        ensure!(!f.is_empty(), "empty factor in scalar '{text}'");
        let (body, exp) = match f.split_once('^') {
            Some((b, e)) => (
                b.trim(),
                e.trim()
                    .parse::<i64>()
                    .with_context(|| format!("bad exponent in scalar '{text}'"))?,
            ),
            None => (f, 1),
        };
        let leading = body.chars().next().unwrap_or('?');
        let base = if leading.is_ascii_digit() || leading == '-' {
            let (n, d) = match body.split_once('/') {
                Some((n, d)) => (
                    n.trim().parse::<i64>()?,
                    d.trim().parse::<i64>()?,
                ),
                None => (body.parse::<i64>()?, 1),
            };
            ensure!(d != 0, "zero denominator in scalar '{text}'");
            ring.rat(n, d)
        } else {
            ring.param(body).map_err(|e| anyhow!("{e}"))?
        };
        let powered = if exp >= 0 {
            base.pow(exp as u32)
        } else {
            base.invert()
                .map_err(|e| anyhow!("{e}"))?
                .pow((-exp) as u32)
        };
        acc = acc.mul(&powered);
    }
    Ok(acc)
}

pub fn build(spec: &SpecFile) -> Result<Model> {
    let ring = ring_of(spec)?;
    match spec.kind.as_str() {
        "finite-bialgebra" => build_bialgebra(spec, &ring),
        "holomorphic" => {
            let deg = spec
                .max_degree
                .context("holomorphic kind needs max-degree")?;
            Ok(Model::Engine(EngineModel {
                engine: holomorphic_engine(&ring, deg),
                lattice: None,
                ctx: StateContext::poly(&ring),
            }))
        }
        "heisenberg" => {
            let lattice = lattice_of(spec)?;
            let ctx = StateContext::lattice(&ring, lattice.rank());
            let engine = heisenberg_vertex_engine(
                &ring,
                &lattice,
                spec.max_weight.unwrap_or(4),
                spec.truncation,
            );
            Ok(Model::Engine(EngineModel {
                engine,
                lattice: Some(lattice),
                ctx,
            }))
        }
        "lattice" => {
            let lattice = lattice_of(spec)?;
            let ctx = StateContext::lattice(&ring, lattice.rank());
            let engine = lattice_vertex_engine(
                &ring,
                &lattice,
                spec.lambda_box.unwrap_or(1),
                spec.max_weight.unwrap_or(2),
                spec.truncation,
            );
            Ok(Model::Engine(EngineModel {
                engine,
                lattice: Some(lattice),
                ctx,
            }))
        }
        "hlinear-lattice" => build_hlinear(spec, &ring),
        "joyce-lattice" => build_joyce(spec, &ring),
        _ => unreachable!("kind validated in load"),
    }
}

fn lattice_of(spec: &SpecFile) -> Result<Lattice> {
    let kappa = spec
        .kappa
        .clone()
        .with_context(|| format!("kind '{}' needs a kappa matrix", spec.kind))?;
    Lattice::new(kappa).map_err(|e| anyhow!("{e}"))
}

fn build_bialgebra(spec: &SpecFile, ring: &Ring) -> Result<Model> {
    let dim = spec.dim.context("finite-bialgebra needs dim")?;
    ensure!(dim >= 1, "dim must be at least 1");
    let unit_rows = spec.unit.as_ref().context("finite-bialgebra needs unit")?;
    let counit_rows = spec
        .counit
        .as_ref()
        .context("finite-bialgebra needs counit")?;
    let product_rows = spec
        .product
        .as_ref()
        .context("finite-bialgebra needs product")?;
    let coproduct_rows = spec
        .coproduct
        .as_ref()
        .context("finite-bialgebra needs coproduct")?;
    ensure!(
        counit_rows.len() == dim as usize,
        "counit needs one entry per basis vector"
    );

    let index_ok = |i: u32| -> Result<()> {
        ensure!(i < dim, "basis index {i} out of range (dim {dim})");
        Ok(())
    };

    let mut unit = StateVector::zero();
    for (i, c) in unit_rows {
        index_ok(*i)?;
        unit.insert_add(BasisKey::B(*i), parse_scalar(ring, c)?);
    }

    let mut product = vec![vec![StateVector::zero(); dim as usize]; dim as usize];
    for (i, j, k, c) in product_rows {
        index_ok(*i)?;
        index_ok(*j)?;
        index_ok(*k)?;
        product[*i as usize][*j as usize].insert_add(BasisKey::B(*k), parse_scalar(ring, c)?);
    }

    let mut coproduct = vec![StateVector::zero(); dim as usize];
    for (i, j, k, c) in coproduct_rows {
        index_ok(*i)?;
        index_ok(*j)?;
        index_ok(*k)?;
        coproduct[*i as usize].insert_add(
            tensor_key(&BasisKey::B(*j), &BasisKey::B(*k)),
            parse_scalar(ring, c)?,
        );
    }

    let mut counit = Vec::with_capacity(dim as usize);
    for c in counit_rows {
        counit.push(parse_scalar(ring, c)?);
    }

    let h = FinBialgebra::new(ring.clone(), dim, unit, product, coproduct, counit)
        .map_err(|e| anyhow!("{e}"))?;

    let r = match &spec.r {
        None => None,
        Some(rows) => {
            let mut r = StateVector::zero();
            for (i, j, c) in rows {
                index_ok(*i)?;
                index_ok(*j)?;
                r.insert_add(
                    tensor_key(&BasisKey::B(*i), &BasisKey::B(*j)),
                    parse_scalar(ring, c)?,
                );
            }
            Some(r)
        }
    };
    Ok(Model::Bialgebra { h, r })
}

fn build_hlinear(spec: &SpecFile, ring: &Ring) -> Result<Model> {
    let label = spec
        .label
        .as_deref()
        .context("hlinear-lattice needs a label algebra name")?;
    ensure!(
        label == "o-z2",
        "unknown label algebra '{label}' (available: o-z2)"
    );
    let (h, _) = o_z2(ring);
    let rows = spec
        .r_label
        .as_ref()
        .context("hlinear-lattice needs an r-label table")?;
    let mut table: BTreeMap<(u32, u32), Scalar> = BTreeMap::new();
    for (g, k, c) in rows {
        ensure!(*g < h.dim && *k < h.dim, "r-label index out of range");
        let prev = table.insert((*g, *k), parse_scalar(ring, c)?);
        ensure!(prev.is_none(), "duplicate r-label row ({g}, {k})");
    }
    ensure!(
        table.len() == (h.dim * h.dim) as usize,
        "r-label must cover all {} index pairs",
        h.dim * h.dim
    );
    let zero = ring.zero();
    let r_h: Arc<LabelPairing> = Arc::new(move |g, k| {
        table.get(&(g, k)).cloned().unwrap_or_else(|| zero.clone())
    });

    let lattice = lattice_of(spec)?;
    let mut ctx = StateContext::lattice(ring, lattice.rank());
    ctx.hdim = Some(h.dim);
    let engine = hlinear_lattice_engine(
        ring,
        &h,
        r_h,
        &lattice,
        spec.lambda_box.unwrap_or(1),
        spec.max_weight.unwrap_or(1),
        spec.truncation,
    )
    .map_err(|e| anyhow!("{e}"))?;
    Ok(Model::Engine(EngineModel {
        engine,
        lattice: Some(lattice),
        ctx,
    }))
}

fn build_joyce(spec: &SpecFile, ring: &Ring) -> Result<Model> {
    let rank = spec.rank.context("joyce-lattice needs rank")?;
    ensure!(rank >= 1, "rank must be at least 1");
    let tau = spec.tau.as_deref().context("joyce-lattice needs tau")?;
    let rows = spec.ext.as_ref().context("joyce-lattice needs ext rows")?;
    let mut table: Vec<Vec<Option<JoyceData>>> = vec![(0..rank).map(|_| None).collect(); rank];
    for row in rows {
        ensure!(
            row.i < rank && row.j < rank,
            "ext row ({}, {}) out of range (rank {rank})",
            row.i,
            row.j
        );
        ensure!(
            table[row.i][row.j].is_none(),
            "duplicate ext row ({}, {})",
            row.i,
            row.j
        );
        table[row.i][row.j] = Some(JoyceData {
            rk: row.rk,
            even: row.even.clone(),
            odd: row.odd.clone(),
        });
    }
    let mut full = Vec::with_capacity(rank);
    for (i, line) in table.into_iter().enumerate() {
        let mut out = Vec::with_capacity(rank);
        for (j, cell) in line.into_iter().enumerate() {
            out.push(cell.with_context(|| format!("missing ext row ({i}, {j})"))?);
        }
        full.push(out);
    }
    let jr = joyce_rmatrix_lattice(ring, full, tau).map_err(|e| anyhow!("{e}"))?;
    // Values feed the bicharacter recursion, so cut tails generously below the
    // window any caller may probe.
    let cut = -2 * (spec.truncation as i64) - 8;
    let bichar = Bicharacter::with_base(
        ring,
        Arc::new(move |lam: &[i64], mu: &[i64]| jr.eval_classes(lam, mu, cut)),
    );
    Ok(Model::Joyce { bichar, rank })
}
