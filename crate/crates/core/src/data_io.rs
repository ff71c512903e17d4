//! File formats: weights, datasets, heatmaps and evaluation reports.
//!
//! Every writer goes through [`write_atomic`], so an interrupted run never
//! leaves a partially written file behind. Byte layouts are documented in
//! `docs/formats.md`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::explain::ExplanationMap;
use crate::network::{Conv2d, Layer, Linear, Network, NetworkMeta};
use crate::tensor::Tensor;
use crate::training::{byte_to_unit, unit_to_byte, LabeledSample};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CAMW";
pub const WEIGHTS_VERSION: u16 = 1;
pub const MANIFEST_NAME: &str = "labels.txt";
pub const REPORT_HEADER: &str = "camlab-report 1";

const KIND_CONV2D: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_MAXPOOL: u8 = 2;
const KIND_GAP: u8 = 3;
const KIND_LINEAR: u8 = 4;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    buf.push(t.rank() as u8);
    for &d in t.shape() {
        put_u32(buf, d)?;
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Serializes a network to the weights-file layout.
pub fn encode_weights(net: &Network) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    let m = &net.meta;
    buf.extend_from_slice(&m.init_seed.to_le_bytes());
    buf.extend_from_slice(&m.train_seed.to_le_bytes());
    buf.extend_from_slice(&m.learning_rate.to_le_bytes());
    buf.extend_from_slice(&m.epochs.to_le_bytes());
    buf.extend_from_slice(&m.history_digest.to_le_bytes());
    buf.push(net.input_shape().len() as u8);
    for &d in net.input_shape() {
        put_u32(&mut buf, d)?;
    }
    put_u32(&mut buf, net.layers().len())?;
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                buf.push(KIND_CONV2D);
                put_u32(&mut buf, c.in_channels)?;
                put_u32(&mut buf, c.out_channels)?;
                put_u32(&mut buf, c.kernel)?;
                put_tensor(&mut buf, &c.weight)?;
                put_tensor(&mut buf, &c.bias)?;
            }
            Layer::Relu => buf.push(KIND_RELU),
            Layer::MaxPool2x2 => buf.push(KIND_MAXPOOL),
            Layer::GlobalAvgPool => buf.push(KIND_GAP),
            Layer::Linear(l) => {
                buf.push(KIND_LINEAR);
                put_u32(&mut buf, l.in_features)?;
                put_u32(&mut buf, l.out_features)?;
                put_tensor(&mut buf, &l.weight)?;
                put_tensor(&mut buf, &l.bias)?;
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn malformed(&self, reason: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason,
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    /// Reads a tensor whose declared shape must equal `expected`.
    fn tensor(&mut self, expected: &[usize], what: &str) -> Result<Tensor> {
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()?);
        }
        if shape != expected {
            return Err(Error::shape(format!(
                "{what} declared as {shape:?}, layer requires {expected:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data)?;
        t.ensure_finite("weights file tensor")?;
        Ok(t)
    }
}

/// Parses a weights file. Checks magic, then version, then CRC, then layout.
pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<Network> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "missing version".into(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 10 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "missing checksum".into(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::BadCrc { stored, computed });
    }

    let mut r = Reader {
        bytes: body,
        pos: 6,
        path,
    };
    let meta = NetworkMeta {
        init_seed: r.u64()?,
        train_seed: r.u64()?,
        learning_rate: r.f32()?,
        epochs: r.u32()? as u32,
        history_digest: r.u64()?,
    };
    let rank = r.u8()? as usize;
    let mut input_shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input_shape.push(r.u32()?);
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let layer = match r.u8()? {
            KIND_CONV2D => {
                let (cin, cout, k) = (r.u32()?, r.u32()?, r.u32()?);
                let w = r.tensor(&[cout, cin, k, k], "conv weight")?;
                let b = r.tensor(&[cout], "conv bias")?;
                Layer::Conv2d(Conv2d::new(w, b)?)
            }
            KIND_RELU => Layer::Relu,
            KIND_MAXPOOL => Layer::MaxPool2x2,
            KIND_GAP => Layer::GlobalAvgPool,
            KIND_LINEAR => {
                let (fin, fout) = (r.u32()?, r.u32()?);
                let w = r.tensor(&[fout, fin], "linear weight")?;
                let b = r.tensor(&[fout], "linear bias")?;
                Layer::Linear(Linear::new(w, b)?)
            }
            other => return Err(r.malformed(format!("unknown layer kind {other} at layer {i}"))),
        };
        layers.push(layer);
    }
    if r.pos != body.len() {
        return Err(r.malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let mut net = Network::new(input_shape, layers)?;
    net.meta = meta;
    Ok(net)
}

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, &encode_weights(net)?)
}

pub fn load_weights(path: &Path) -> Result<Network> {
    decode_weights(&fs::read(path)?, path)
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

/// Binary PGM (P5), maxval 255.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary PPM (P6), maxval 255, pixels interleaved RGB.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    debug_assert_eq!(rgb.len(), 3 * width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Parses a binary PGM with maxval 255: `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        // exactly one whitespace byte ends each header token
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(tok)
    };
    if token()? != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut num = || -> Result<usize> { token()?.parse().map_err(|_| bad("bad header number")) };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let start = pos.min(bytes.len());
    let pixels = &bytes[start..];
    if pixels.len() != w * h {
        return Err(bad("pixel count does not match header"));
    }
    Ok((w, h, pixels.to_vec()))
}

fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    t.data().iter().map(|&v| unit_to_byte(v)).collect()
}

/// Writes `map` (values in `[0,1]`) as a PGM at `path`, and an overlay PPM
/// next to it (`<stem>.overlay.ppm`): red is the map, green and blue are the
/// grayscale image scaled by 0.6. Returns both paths.
pub fn export_map_tensor(
    map: &Tensor,
    original: &Tensor,
    path: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let (h, w) = map.hw()?;
    let (c, ih, iw) = original.chw()?;
    if (ih, iw) != (h, w) {
        return Err(Error::shape(format!(
            "map {h}x{w} does not match image {ih}x{iw}"
        )));
    }
    map.ensure_finite("heatmap")?;
    original.ensure_finite("heatmap image")?;
    let heat = tensor_to_bytes(map);
    let plane = h * w;
    let mut rgb = Vec::with_capacity(3 * plane);
    for (p, &r) in heat.iter().enumerate() {
        let gray = (0..c)
            .map(|ch| original.data()[ch * plane + p] as f64)
            .sum::<f64>()
            / c as f64;
        let gb = unit_to_byte((0.6 * gray) as f32);
        rgb.extend_from_slice(&[r, gb, gb]);
    }
    let overlay = overlay_path(path);
    write_atomic(path, &encode_pgm(w, h, &heat))?;
    write_atomic(&overlay, &encode_ppm(w, h, &rgb))?;
    Ok((path.to_path_buf(), overlay))
}

pub fn export_heatmap(
    map: &ExplanationMap,
    original: &Tensor,
    path: &Path,
) -> Result<(PathBuf, PathBuf)> {
    export_map_tensor(&map.upsampled, original, path)
}

pub fn overlay_path(path: &Path) -> PathBuf {
    path.with_extension("overlay.ppm")
}

/// Reads a single-channel image from a PGM as a `[1,H,W]` tensor in `[0,1]`.
pub fn load_pgm_image(path: &Path) -> Result<Tensor> {
    let (w, h, px) = decode_pgm(&fs::read(path)?, path)?;
    Tensor::new(vec![1, h, w], px.into_iter().map(byte_to_unit).collect())
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

fn mask_path_for(image_name: &str) -> String {
    match image_name.strip_suffix(".pgm") {
        Some(stem) => format!("{stem}.mask.pgm"),
        None => format!("{image_name}.mask.pgm"),
    }
}

/// Writes single-channel samples as `sample_NNNNN.pgm` (+ `.mask.pgm`) and
/// a `labels.txt` manifest of `<filename>,<label>` lines.
pub fn save_dataset(dir: &Path, samples: &[LabeledSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let (c, h, w) = s.image.chw()?;
        if c != 1 {
            return Err(Error::shape(format!(
                "PGM datasets are single-channel, got {c} channels"
            )));
        }
        let name = format!("sample_{i:05}.pgm");
        write_atomic(
            &dir.join(&name),
            &encode_pgm(w, h, &tensor_to_bytes(&s.image)),
        )?;
        if let Some(mask) = &s.mask {
            if mask.shape() != [h, w] {
                return Err(Error::shape("mask does not match image"));
            }
            let bytes: Vec<u8> = mask
                .data()
                .iter()
                .map(|&m| if m > 0.5 { 255 } else { 0 })
                .collect();
            write_atomic(&dir.join(mask_path_for(&name)), &encode_pgm(w, h, &bytes))?;
        }
        manifest.push_str(&format!("{name},{}\n", s.label));
    }
    write_atomic(&dir.join(MANIFEST_NAME), manifest.as_bytes())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledSample>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)?;
    let bad = |line: usize, reason: String| Error::Format {
        path: manifest_path.clone(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, label) = line
            .rsplit_once(',')
            .ok_or_else(|| bad(n, "expected <filename>,<label>".into()))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| bad(n, format!("bad label {label:?}")))?;
        let name = name.trim();
        let image_path = dir.join(name);
        if !image_path.is_file() {
            return Err(bad(n, format!("missing image {name}")));
        }
        let image = load_pgm_image(&image_path)?;
        let mask_path = dir.join(mask_path_for(name));
        let mask = if mask_path.is_file() {
            let (w, h, px) = decode_pgm(&fs::read(&mask_path)?, &mask_path)?;
            if image.shape() != [1, h, w] {
                return Err(bad(n, "mask size differs from image".into()));
            }
            if px.iter().any(|&b| b != 0 && b != 255) {
                return Err(Error::Format {
                    path: mask_path,
                    reason: "mask is not binary".into(),
                });
            }
            Some(Tensor::new(
                vec![h, w],
                px.iter().map(|&b| (b == 255) as u8 as f32).collect(),
            )?)
        } else {
            None
        };
        samples.push(LabeledSample { image, label, mask });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

/// Renders a report as `key: value` lines with `[config]` and
/// `[method <name>]` sections, keys sorted.
pub fn format_report(report: &EvalReport) -> Result<String> {
    report.validate()?;
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    out.push_str(&format!("sample_count: {}\n", report.sample_count));
    if let Some(seed) = report.seed {
        out.push_str(&format!("seed: {seed}\n"));
    }
    if let Some(acc) = report.accuracy {
        out.push_str(&format!("accuracy: {}\n", fmt_value(acc)));
    }
    if !report.config.is_empty() {
        out.push_str("[config]\n");
        for (k, v) in &report.config {
            if k.contains(':') || v.contains('\n') {
                return Err(Error::invalid(format!(
                    "config entry {k:?} cannot be serialized"
                )));
            }
            out.push_str(&format!("{k}: {v}\n"));
        }
    }
    for (method, metrics) in &report.methods {
        out.push_str(&format!("[method {method}]\n"));
        for (k, &v) in metrics {
            out.push_str(&format!("{k}: {}\n", fmt_value(v)));
        }
    }
    Ok(out)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let text = format_report(report)?;
    write_atomic(path, text.as_bytes())
}

pub fn parse_report(text: &str, path: &Path) -> Result<EvalReport> {
    let bad = |line: usize, reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, REPORT_HEADER)) => {}
        _ => return Err(bad(0, "missing report header")),
    }
    enum Section {
        Top,
        Config,
        Method(String),
    }
    let mut section = Section::Top;
    let mut report = EvalReport::default();
    let mut seen_count = false;
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = if inner == "config" {
                Section::Config
            } else if let Some(name) = inner.strip_prefix("method ") {
                report.methods.entry(name.to_string()).or_default();
                Section::Method(name.to_string())
            } else {
                return Err(bad(n, "unknown section"));
            };
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| bad(n, "expected key: value"))?;
        let float = || value.parse::<f64>().map_err(|_| bad(n, "bad number"));
        match &section {
            Section::Top => match key {
                "sample_count" => {
                    report.sample_count = value.parse().map_err(|_| bad(n, "bad sample_count"))?;
                    seen_count = true;
                }
                "seed" => report.seed = Some(value.parse().map_err(|_| bad(n, "bad seed"))?),
                "accuracy" => report.accuracy = Some(float()?),
                _ => return Err(bad(n, "unknown top-level key")),
            },
            Section::Config => {
                report.config.insert(key.to_string(), value.to_string());
            }
            Section::Method(m) => {
                report
                    .methods
                    .get_mut(m)
                    .expect("section inserted")
                    .insert(key.to_string(), float()?);
            }
        }
    }
    if !seen_count {
        return Err(bad(0, "missing sample_count"));
    }
    report.validate()?;
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    parse_report(&fs::read_to_string(path)?, path)
}

/// Side-by-side table of one metric set per report column.
pub fn comparison_table(reports: &[(String, EvalReport)]) -> String {
    let mut rows: BTreeMap<(String, String), Vec<Option<f64>>> = BTreeMap::new();
    for (col, (_, r)) in reports.iter().enumerate() {
        for (method, metrics) in &r.methods {
            for (k, &v) in metrics {
                rows.entry((method.clone(), k.clone()))
                    .or_insert_with(|| vec![None; reports.len()])[col] = Some(v);
            }
        }
    }
    let mut out = format!("{:<20} {:<16}", "method", "metric");
    for (name, _) in reports {
        out.push_str(&format!(" {name:>12}"));
    }
    out.push('\n');
    for ((method, metric), vals) in rows {
        out.push_str(&format!("{method:<20} {metric:<16}"));
        for v in vals {
            match v {
                Some(v) => out.push_str(&format!(" {v:>12.6}")),
                None => out.push_str(&format!(" {:>12}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;

    fn small_net() -> Network {
        let mut net = Network::init(
            vec![1, 4, 4],
            &[
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear {
                    in_features: 2,
                    out_features: 3,
                },
            ],
            5,
        )
        .unwrap();
        net.meta.learning_rate = 0.05;
        net.meta.epochs = 4;
        net.meta.train_seed = 99;
        net.meta.history_digest = 0xdead_beef;
        net
    }

    #[test]
    fn weights_round_trip_bit_exact() {
        let net = small_net();
        let bytes = encode_weights(&net).unwrap();
        let back = decode_weights(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.params().iter().zip(net.params()) {
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(encode_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn weights_corruption_is_detected() {
        let bytes = encode_weights(&small_net()).unwrap();
        let p = Path::new("mem");

        let mut crc = bytes.clone();
        let last = crc.len() - 1;
        crc[last] ^= 0x01;
        assert!(matches!(decode_weights(&crc, p), Err(Error::BadCrc { .. })));

        let mut body = bytes.clone();
        body[40] ^= 0x80;
        assert!(matches!(
            decode_weights(&body, p),
            Err(Error::BadCrc { .. })
        ));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_weights(&magic, p), Err(Error::BadMagic)));

        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(
            decode_weights(&version, p),
            Err(Error::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn weights_shape_mismatch_is_its_own_error() {
        let net = small_net();
        let mut bytes = encode_weights(&net).unwrap();
        bytes.truncate(bytes.len() - 4);
        // header: 4 magic + 2 version + 8 + 8 + 4 + 4 + 8 meta + 1 rank + 12 extents
        // + 4 layer count + 1 kind + 12 conv hyperparameters = 68, then weight rank
        // and the first extent (out channels)
        let first_extent = 68 + 1;
        bytes[first_extent] = 7;
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_weights(&bytes, Path::new("mem")),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pgm_round_trip_and_header() {
        let bytes = encode_pgm(3, 2, &[0, 1, 2, 253, 254, 255]);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let (w, h, px) = decode_pgm(&bytes, Path::new("mem")).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![0, 1, 2, 253, 254, 255]);
        let commented = b"P5\n# made by hand\n3 2\n255\n\x00\x01\x02\x03\x04\x05";
        assert_eq!(decode_pgm(commented, Path::new("mem")).unwrap().2.len(), 6);
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00", Path::new("mem")).is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00", Path::new("mem")).is_err());
    }

    #[test]
    fn empty_report_is_header_and_count() {
        let r = EvalReport {
            sample_count: 3,
            ..EvalReport::default()
        };
        assert_eq!(
            format_report(&r).unwrap(),
            "camlab-report 1\nsample_count: 3\n"
        );
    }

    #[test]
    fn nan_report_is_rejected() {
        let mut r = EvalReport {
            sample_count: 3,
            ..EvalReport::default()
        };
        r.accuracy = Some(f64::NAN);
        assert!(format_report(&r).is_err());
    }

    #[test]
    fn report_parses_back() {
        let mut r = EvalReport {
            sample_count: 12,
            seed: Some(7),
            accuracy: Some(0.75),
            ..EvalReport::default()
        };
        r.config.insert("steps".into(), "20".into());
        r.config.insert("baseline".into(), "mean".into());
        let m = r.methods.entry("grad-cam".into()).or_default();
        m.insert("deletion_auc".into(), 0.125);
        m.insert("insertion_auc".into(), 0.5);
        let text = format_report(&r).unwrap();
        let back = parse_report(&text, Path::new("mem")).unwrap();
        assert_eq!(back, r);
        assert_eq!(format_report(&back).unwrap(), text);
        assert!(parse_report("nope\n", Path::new("mem")).is_err());
    }
}
