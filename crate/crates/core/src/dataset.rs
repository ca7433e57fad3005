//! Line-delimited dataset files.
//!
//! The first line is a JSON header carrying the format tag, `d`, `m` and,
//! for generated data, the generator configuration and relevant feature
//! indices. Every following line is one instance, `{"x": [[..]..], "y": [..]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{FeatureSpec, Features, LabelSeq, SequenceInstance};
use crate::error::{Error, Result};
use crate::synth::{GeneratorConfig, SyntheticData};

pub const DATASET_FORMAT: &str = "medn-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub config: GeneratorConfig,
    pub relevant: Vec<usize>,
    pub weight_distribution: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorMeta>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub instances: Vec<SequenceInstance>,
}

impl Dataset {
    pub fn new(spec: FeatureSpec, instances: Vec<SequenceInstance>) -> Result<Self> {
        for inst in &instances {
            spec.check(&inst.x, Some(&inst.y))?;
        }
        let header = DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            d: spec.d,
            m: spec.m,
            generator: None,
        };
        Ok(Self { header, instances })
    }

    pub fn from_synthetic(data: &SyntheticData) -> Result<Self> {
        let mut ds = Self::new(data.crf.model.spec, data.instances.clone())?;
        ds.header.generator = Some(GeneratorMeta {
            config: data.config,
            relevant: data.crf.relevant.clone(),
            weight_distribution: "standard_normal".into(),
        });
        Ok(ds)
    }

    pub fn spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(self.header.d, self.header.m)
    }

    /// Relevant feature indices when the file came from the generator.
    pub fn relevant(&self) -> Option<&[usize]> {
        self.header.generator.as_ref().map(|g| g.relevant.as_slice())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for inst in &self.instances {
            let rec = Record { x: inst.x.to_rows(), y: inst.y.0.clone() };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header_line = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
        };
        let header: DatasetHeader =
            serde_json::from_str(&header_line).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Parse { line: 1, msg: format!("unknown format tag {:?}", header.format) });
        }
        if header.version != DATASET_VERSION {
            return Err(Error::Parse { line: 1, msg: format!("unsupported version {}", header.version) });
        }
        let spec = FeatureSpec::new(header.d, header.m)?;
        let mut instances = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let x = Features::from_rows(&rec.x).map_err(|e| parse_err(e.to_string()))?;
            let inst = SequenceInstance::new(x, LabelSeq(rec.y), spec.m).map_err(|e| parse_err(e.to_string()))?;
            spec.check(&inst.x, Some(&inst.y)).map_err(|e| parse_err(e.to_string()))?;
            instances.push(inst);
        }
        Ok(Self { header, instances })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
