//! Link samples and the CSV formats they travel in: drive-test measurements,
//! the base-station registry and the feature table.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::features::{BaseStation, FeatureVector, DEFAULT_VBW_DEG, FEATURE_NAMES, N_FEATURES};
use crate::geodesy::GeoPoint;

/// Plausible RSRP range; values outside indicate a corrupt record.
pub const RSRP_WINDOW_DBM: (f64, f64) = (-160.0, -20.0);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn row(row: usize, message: impl Into<String>) -> Self {
        DataError::InvalidRow {
            row,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceTag {
    Real,
    Synthetic,
    Smote,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Real => "real",
            SourceTag::Synthetic => "synthetic",
            SourceTag::Smote => "smote",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(SourceTag::Real),
            "synthetic" => Ok(SourceTag::Synthetic),
            "smote" => Ok(SourceTag::Smote),
            other => Err(format!("unknown source tag {other:?}")),
        }
    }
}

/// One drive-test RSRP sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub id: String,
    pub rx: GeoPoint,
    pub rsrp_dbm: f64,
    pub earfcn: u32,
    pub cell_id: String,
    pub bs_id: String,
    pub env: String,
    pub timestamp: Option<f64>,
}

/// One BS-to-point link with its features and ΔRSRP target.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSample {
    pub id: String,
    pub bs_id: String,
    pub env: String,
    pub lat: f64,
    pub lon: f64,
    pub source: SourceTag,
    pub features: FeatureVector,
    pub target: f64,
    /// Ids of the samples this one was interpolated from (SMOTE only).
    pub parents: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct MeasurementRow {
    lat: f64,
    lon: f64,
    rsrp_dbm: f64,
    earfcn: u32,
    cell_id: String,
    bs_id: String,
    env: String,
    #[serde(default)]
    timestamp: Option<f64>,
}

/// Parses measurement CSV; record ids are `<env>/m<row>` with 0-based rows.
pub fn read_measurements(reader: impl Read) -> Result<Vec<MeasurementRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, result) in rdr.deserialize::<MeasurementRow>().enumerate() {
        let m = result?;
        let rx = GeoPoint::new(m.lat, m.lon).map_err(|e| DataError::row(row, e.to_string()))?;
        if !(RSRP_WINDOW_DBM.0..=RSRP_WINDOW_DBM.1).contains(&m.rsrp_dbm) {
            return Err(DataError::row(row, format!("rsrp {} dBm outside sanity window", m.rsrp_dbm)));
        }
        out.push(MeasurementRecord {
            id: format!("{}/m{row}", m.env),
            rx,
            rsrp_dbm: m.rsrp_dbm,
            earfcn: m.earfcn,
            cell_id: m.cell_id,
            bs_id: m.bs_id,
            env: m.env,
            timestamp: m.timestamp,
        });
    }
    Ok(out)
}

pub fn load_measurements(path: &Path) -> Result<Vec<MeasurementRecord>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_measurements(file)
}

pub fn write_measurements(records: &[MeasurementRecord], writer: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lat", "lon", "rsrp_dbm", "earfcn", "cell_id", "bs_id", "env", "timestamp"])?;
    for r in records {
        w.write_record([
            r.rx.lat.to_string(),
            r.rx.lon.to_string(),
            r.rsrp_dbm.to_string(),
            r.earfcn.to_string(),
            r.cell_id.clone(),
            r.bs_id.clone(),
            r.env.clone(),
            r.timestamp.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RegistryRow {
    bs_id: String,
    lat: f64,
    lon: f64,
    tower_height_agl_m: f64,
    #[serde(default)]
    vbw_deg: Option<f64>,
    #[serde(default)]
    sector_azimuths: String,
    #[serde(default)]
    carriers_hz: String,
}

fn parse_list(s: &str, row: usize, what: &str) -> Result<Vec<f64>, DataError> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| DataError::row(row, format!("bad {what} entry {t:?}"))))
        .collect()
}

fn join_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn read_registry(reader: impl Read) -> Result<Vec<BaseStation>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, result) in rdr.deserialize::<RegistryRow>().enumerate() {
        let r = result?;
        let location = GeoPoint::new(r.lat, r.lon).map_err(|e| DataError::row(row, e.to_string()))?;
        let bs = BaseStation {
            id: r.bs_id,
            location,
            tower_height_agl: r.tower_height_agl_m,
            vbw_deg: r.vbw_deg.unwrap_or(DEFAULT_VBW_DEG),
            sector_azimuths: parse_list(&r.sector_azimuths, row, "sector azimuth")?,
            carriers: parse_list(&r.carriers_hz, row, "carrier")?,
        };
        bs.validate().map_err(|e| DataError::row(row, e.to_string()))?;
        out.push(bs);
    }
    Ok(out)
}

pub fn load_registry(path: &Path) -> Result<Vec<BaseStation>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_registry(file)
}

pub fn write_registry(stations: &[BaseStation], writer: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bs_id", "lat", "lon", "tower_height_agl_m", "vbw_deg", "sector_azimuths", "carriers_hz"])?;
    for b in stations {
        w.write_record([
            b.id.clone(),
            b.location.lat.to_string(),
            b.location.lon.to_string(),
            b.tower_height_agl.to_string(),
            b.vbw_deg.to_string(),
            join_list(&b.sector_azimuths),
            join_list(&b.carriers),
        ])?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

const ID_COLUMNS: [&str; 8] = [
    "sample_id",
    "bs_id",
    "env",
    "lat",
    "lon",
    "source_tag",
    "target_delta_rsrp",
    "parents",
];

/// Writes the feature table. Floats use the shortest representation that
/// parses back to the same value, so a write/read cycle is lossless.
pub fn write_feature_table(samples: &[LinkSample], writer: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ID_COLUMNS.iter().chain(FEATURE_NAMES.iter()))?;
    for s in samples {
        let mut rec = vec![
            s.id.clone(),
            s.bs_id.clone(),
            s.env.clone(),
            s.lat.to_string(),
            s.lon.to_string(),
            s.source.to_string(),
            s.target.to_string(),
            s.parents.join(";"),
        ];
        rec.extend(s.features.to_array().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

pub fn read_feature_table(reader: impl Read) -> Result<Vec<LinkSample>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_cols: Vec<usize> = ID_COLUMNS.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let feat_cols: Vec<usize> = FEATURE_NAMES.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let text = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| {
            text(c)
                .parse::<f64>()
                .map_err(|_| DataError::row(row, format!("non-numeric value {:?}", text(c))))
        };
        let mut features = [0.0; N_FEATURES];
        for (slot, &c) in features.iter_mut().zip(&feat_cols) {
            *slot = num(c)?;
        }
        let parents = text(id_cols[7]);
        out.push(LinkSample {
            id: text(id_cols[0]).to_string(),
            bs_id: text(id_cols[1]).to_string(),
            env: text(id_cols[2]).to_string(),
            lat: num(id_cols[3])?,
            lon: num(id_cols[4])?,
            source: text(id_cols[5]).parse().map_err(|e: String| DataError::row(row, e))?,
            target: num(id_cols[6])?,
            parents: if parents.is_empty() {
                Vec::new()
            } else {
                parents.split(';').map(str::to_string).collect()
            },
            features: FeatureVector::from_array(features),
        });
    }
    Ok(out)
}

pub fn save_feature_table(samples: &[LinkSample], path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    write_feature_table(samples, std::io::BufWriter::new(file))
}

pub fn load_feature_table(path: &Path) -> Result<Vec<LinkSample>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_feature_table(std::io::BufReader::new(file))
}

/// Feature rows as arrays, in sample order.
pub fn feature_matrix(samples: &[LinkSample]) -> Vec<[f64; N_FEATURES]> {
    samples.iter().map(|s| s.features.to_array()).collect()
}

pub fn targets(samples: &[LinkSample]) -> Vec<f64> {
    samples.iter().map(|s| s.target).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MEAS: &str = "lat,lon,rsrp_dbm,earfcn,cell_id,bs_id,env,timestamp\n\
        40.001,-86.0,-77,5110,c1,bs1,rural,12.5\n\
        40.002,-86.001,-95.5,66536,c2,bs1,rural,\n";

    #[test]
    fn measurements_parse() {
        let m = read_measurements(MEAS.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].id, "rural/m0");
        assert_eq!(m[1].id, "rural/m1");
        assert_eq!(m[0].timestamp, Some(12.5));
        assert_eq!(m[1].timestamp, None);
        assert_eq!(m[1].earfcn, 66536);
        let mut buf = Vec::new();
        write_measurements(&m, &mut buf).unwrap();
        assert_eq!(read_measurements(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rsrp_outside_window_is_rejected() {
        let bad = MEAS.replace("-95.5", "-5");
        assert!(matches!(
            read_measurements(bad.as_bytes()),
            Err(DataError::InvalidRow { row: 1, .. })
        ));
    }

    #[test]
    fn registry_round_trip() {
        let text = "bs_id,lat,lon,tower_height_agl_m,vbw_deg,sector_azimuths,carriers_hz\n\
            bs1,40.0,-86.0,30,7,0;120;240,739000000;2120000000\n\
            bs2,40.01,-86.02,25,,,739000000\n";
        let reg = read_registry(text.as_bytes()).unwrap();
        assert_eq!(reg[0].sector_azimuths, vec![0.0, 120.0, 240.0]);
        assert_eq!(reg[0].carriers, vec![739e6, 2120e6]);
        assert!(reg[1].sector_azimuths.is_empty());
        assert_eq!(reg[1].vbw_deg, DEFAULT_VBW_DEG);
        let mut buf = Vec::new();
        write_registry(&reg, &mut buf).unwrap();
        assert_eq!(read_registry(buf.as_slice()).unwrap(), reg);
    }

    #[test]
    fn registry_rejects_invalid_station() {
        let text = "bs_id,lat,lon,tower_height_agl_m,vbw_deg,sector_azimuths,carriers_hz\nbs1,40,-86,0,7,,\n";
        assert!(read_registry(text.as_bytes()).is_err());
    }

    #[test]
    fn feature_table_round_trip_is_lossless() {
        let f: [f64; N_FEATURES] = std::array::from_fn(|i| (i as f64 + 0.1).sqrt() * 1e3 / 7.0);
        let samples = vec![
            LinkSample {
                id: "rural/m0".into(),
                bs_id: "bs1".into(),
                env: "rural".into(),
                lat: 40.000123456789,
                lon: -86.1,
                source: SourceTag::Real,
                features: FeatureVector::from_array(f),
                target: -3.0 / 7.0,
                parents: vec![],
            },
            LinkSample {
                id: "rural/smote/0".into(),
                bs_id: "bs1".into(),
                env: "rural".into(),
                lat: 40.0,
                lon: -86.0,
                source: SourceTag::Smote,
                features: FeatureVector::from_array(f),
                target: 1e-17,
                parents: vec!["rural/m0".into(), "rural/m4".into()],
            },
        ];
        let mut buf = Vec::new();
        write_feature_table(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,bs_id,env,lat,lon,source_tag,target_delta_rsrp,parents,freq_hz,"));
        assert_eq!(read_feature_table(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn feature_table_requires_all_columns() {
        let text = "sample_id,bs_id\nx,y\n";
        assert!(matches!(read_feature_table(text.as_bytes()), Err(DataError::MissingColumn(_))));
    }
}
