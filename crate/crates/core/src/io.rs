//! File formats: protomatrix and lifted-code JSON, packet files, received
//! batches, and the bundled design presets.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::FieldSpec;
use crate::protograph::{BatchRows, LiftedCode, Protomatrix, PuncturingVector};

/// Protomatrix file. Matrices are row-major nested arrays, indices 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub m: u32,
    #[serde(rename = "M")]
    pub m_batch: usize,
    pub n_v: usize,
    pub n_c1: usize,
    pub n_c2: usize,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<u32>>,
    #[serde(rename = "B2")]
    pub b2: Vec<Vec<u32>>,
    pub delta: Vec<f64>,
    #[serde(rename = "Z1")]
    pub z1: usize,
    #[serde(rename = "Z2")]
    pub z2: usize,
    /// Number of leading `B2` rows forming the core; the rest are extension
    /// rows in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_rows: Option<usize>,
    /// Line-network length the design targets.
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<usize>,
    #[serde(default)]
    pub homogeneous: bool,
}

/// Validated contents of a protomatrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub name: String,
    pub field: FieldSpec,
    pub m_batch: usize,
    pub b: Protomatrix,
    pub delta: PuncturingVector,
    pub z1: usize,
    pub z2: usize,
    pub core_rows: usize,
    pub hops: usize,
    pub homogeneous: bool,
}

impl Design {
    /// Core plus the first `ext` extension rows.
    pub fn with_extension(&self, ext: usize) -> (Protomatrix, PuncturingVector) {
        let rows = (self.core_rows + ext).min(self.b.n_c2());
        (self.b.truncate_b2(rows), self.delta.truncate(rows))
    }

    pub fn extension_rows(&self) -> usize {
        self.b.n_c2() - self.core_rows
    }

    pub fn to_file(&self) -> ProtoFile {
        ProtoFile {
            name: Some(self.name.clone()),
            m: self.field.m,
            m_batch: self.m_batch,
            n_v: self.b.n_v(),
            n_c1: self.b.n_c1(),
            n_c2: self.b.n_c2(),
            b1: self.b.b1().to_vec(),
            b2: self.b.b2().to_vec(),
            delta: self.delta.values().to_vec(),
            z1: self.z1,
            z2: self.z2,
            core_rows: Some(self.core_rows),
            hops: Some(self.hops),
            homogeneous: self.homogeneous,
        }
    }
}

impl ProtoFile {
    pub fn into_design(self) -> Result<Design> {
        let field = FieldSpec::new(self.m)?;
        if self.b1.len() != self.n_c1 || self.b2.len() != self.n_c2 {
            return Err(Error::Protomatrix(format!(
                "declared n_c1={} n_c2={} but B1 has {} rows and B2 has {}",
                self.n_c1,
                self.n_c2,
                self.b1.len(),
                self.b2.len()
            )));
        }
        if self.m_batch == 0 {
            return Err(Error::Protomatrix("batch size M must be positive".into()));
        }
        let b = Protomatrix::new(self.n_v, self.b1, self.b2)?;
        let delta = PuncturingVector::new(self.delta)?;
        if delta.len() != b.n_c2() {
            return Err(Error::Puncturing(format!(
                "{} entries for {} B-CN types",
                delta.len(),
                b.n_c2()
            )));
        }
        let core_rows = self.core_rows.unwrap_or(b.n_c2());
        if core_rows > b.n_c2() {
            return Err(Error::Protomatrix(format!(
                "core_rows={core_rows} exceeds n_c2={}",
                b.n_c2()
            )));
        }
        Ok(Design {
            name: self.name.unwrap_or_else(|| "unnamed".into()),
            field,
            m_batch: self.m_batch,
            b,
            delta,
            z1: self.z1,
            z2: self.z2,
            core_rows,
            hops: self.hops.unwrap_or(1),
            homogeneous: self.homogeneous,
        })
    }
}

pub fn parse_design(text: &str) -> Result<Design> {
    serde_json::from_str::<ProtoFile>(text)?.into_design()
}

pub fn design_to_json(design: &Design) -> Result<String> {
    Ok(serde_json::to_string_pretty(&design.to_file())?)
}

const DESIGN_EXAMPLE_1: &str = include_str!("../presets/design_example_1.json");
const DESIGN_EXAMPLE_2: &str = include_str!("../presets/design_example_2.json");

/// Three-hop heterogeneous design with `M = 8`, `A = 250`.
pub fn design_example_1() -> Design {
    parse_design(DESIGN_EXAMPLE_1).expect("bundled preset is valid")
}

/// Two-hop homogeneous design with `M = 16`, `A = 1600`.
pub fn design_example_2() -> Design {
    parse_design(DESIGN_EXAMPLE_2).expect("bundled preset is valid")
}

/// Bundled preset file contents.
pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "design_example_1" | "example1" | "de1" => Some(DESIGN_EXAMPLE_1),
        "design_example_2" | "example2" | "de2" => Some(DESIGN_EXAMPLE_2),
        _ => None,
    }
}

pub fn preset_by_name(name: &str) -> Option<Design> {
    preset_source(name).map(|s| parse_design(s).expect("bundled preset is valid"))
}

/// Lifted code file: protomatrix header fields plus the graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedCodeFile {
    pub m: u32,
    #[serde(rename = "M")]
    pub m_batch: usize,
    pub n_v: usize,
    pub n_c1: usize,
    #[serde(rename = "Z1")]
    pub z1: usize,
    #[serde(rename = "Z2")]
    pub z2: usize,
    /// `(row, col, label)` triples.
    #[serde(rename = "T1")]
    pub t1: Vec<(usize, usize, u8)>,
    /// VN index list per surviving batch row.
    #[serde(rename = "T2")]
    pub t2: Vec<Vec<usize>>,
    /// B-CN type of each batch row.
    #[serde(rename = "T2_types")]
    pub t2_types: Vec<usize>,
}

impl From<&LiftedCode> for LiftedCodeFile {
    fn from(c: &LiftedCode) -> Self {
        LiftedCodeFile {
            m: c.field.m,
            m_batch: c.m_batch,
            n_v: c.n_v,
            n_c1: c.n_c1,
            z1: c.z1,
            z2: c.z2,
            t1: c
                .t1
                .iter()
                .enumerate()
                .flat_map(|(r, row)| row.iter().map(move |&(col, l)| (r, col, l)))
                .collect(),
            t2: c.t2.rows.clone(),
            t2_types: c.t2.types.clone(),
        }
    }
}

impl LiftedCodeFile {
    pub fn into_code(self) -> Result<LiftedCode> {
        let field = FieldSpec::new(self.m)?;
        let zz = self.z1 * self.z2;
        let k = self.n_v * zz;
        let rows = self.n_c1 * zz;
        let mut t1 = vec![Vec::new(); rows];
        for (r, c, l) in self.t1 {
            if r >= rows || c >= k || l == 0 || (l as usize) >= field.q() {
                return Err(Error::Codec(format!("bad T1 entry ({r}, {c}, {l})")));
            }
            t1[r].push((c, l));
        }
        for row in t1.iter_mut() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Codec("parallel edge in T1".into()));
            }
        }
        if self.t2.len() != self.t2_types.len() {
            return Err(Error::Codec("T2 and T2_types lengths differ".into()));
        }
        if self.t2.iter().flatten().any(|&v| v >= k) {
            return Err(Error::Codec("T2 index out of range".into()));
        }
        Ok(LiftedCode {
            field,
            m_batch: self.m_batch,
            z1: self.z1,
            z2: self.z2,
            n_v: self.n_v,
            n_c1: self.n_c1,
            t1,
            t2: BatchRows {
                rows: self.t2,
                types: self.t2_types,
            },
        })
    }
}

pub fn code_to_json(code: &LiftedCode) -> Result<String> {
    Ok(serde_json::to_string(&LiftedCodeFile::from(code))?)
}

pub fn parse_code(text: &str) -> Result<LiftedCode> {
    serde_json::from_str::<LiftedCodeFile>(text)?.into_code()
}

/// Packets of `t` symbols each, stored as a `(T, count, m)` little-endian
/// `u32` header followed by `count` rows of `T` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketFile {
    pub t: usize,
    pub m: u32,
    pub packets: Vec<Vec<u8>>,
}

impl PacketFile {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for v in [self.t as u32, self.packets.len() as u32, self.m] {
            w.write_all(&v.to_le_bytes())?;
        }
        for p in &self.packets {
            if p.len() != self.t {
                return Err(Error::Codec(format!("packet length {} != T={}", p.len(), self.t)));
            }
            w.write_all(p)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut hdr = [0u8; 12];
        r.read_exact(&mut hdr)?;
        let word = |i: usize| u32::from_le_bytes(hdr[4 * i..4 * i + 4].try_into().unwrap());
        let (t, count, m) = (word(0) as usize, word(1) as usize, word(2));
        let q = FieldSpec::new(m)?.q();
        let mut packets = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = vec![0u8; t];
            r.read_exact(&mut p)?;
            if p.iter().any(|&s| (s as usize) >= q) {
                return Err(Error::Codec(format!("symbol outside GF(2^{m})")));
            }
            packets.push(p);
        }
        Ok(PacketFile { t, m, packets })
    }
}

/// One received batch: the batch row index, the seed its generator matrix
/// is drawn from, the column-reduced transfer matrix (`M x r`, row-major)
/// and the `r` received packets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedBatch {
    pub batch: usize,
    pub g_seed: u64,
    pub transfer: Vec<Vec<u8>>,
    pub packets: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedFile {
    pub m: u32,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub batches: Vec<ReceivedBatch>,
}
