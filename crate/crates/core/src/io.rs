//! Plain-text artifacts. Every file starts with `# eclsm <kind> v1 config=<hash>`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::ComplexField;
use crate::lsm::{IndicatorField, MorozovFlag, SamplingGrid};
use crate::mesh::{Mesh, Point2, RegionTag, VertexFlag};
use crate::synth::{BandConvention, MultistaticMatrix, ProbeKind};

pub const FORMAT_VERSION: &str = "v1";

fn header(kind: &str, config_hash: &str) -> String {
    format!("# eclsm {kind} {FORMAT_VERSION} config={config_hash}")
}

fn format_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        line,
        message: message.into(),
    })
}

/// Numbered lines of a text artifact.
struct Lines {
    lines: Vec<String>,
    next: usize,
}

impl Lines {
    fn new(r: impl Read) -> Result<Self> {
        let lines = BufReader::new(r).lines().collect::<std::io::Result<Vec<_>>>()?;
        Ok(Self { lines, next: 0 })
    }

    /// 1-based number of the line returned last.
    fn number(&self) -> usize {
        self.next
    }

    fn next_line(&mut self, what: &str) -> Result<&str> {
        match self.lines.get(self.next) {
            Some(l) => {
                self.next += 1;
                Ok(l.as_str())
            }
            None => format_err(self.next + 1, format!("unexpected end of file, expected {what}")),
        }
    }

    fn fields(&mut self, what: &str, count: usize) -> Result<Vec<String>> {
        let line = self.next_line(what)?;
        let sep = if line.contains(',') { ',' } else { ' ' };
        let f: Vec<String> = line
            .split(sep)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if f.len() != count {
            return format_err(self.number(), format!("expected {count} fields for {what}, found {}", f.len()));
        }
        Ok(f)
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.parse()
            .or_else(|_| format_err(self.number(), format!("cannot parse {what} from `{s}`")))
    }

    /// Checks the version header and returns the config hash.
    fn header(&mut self, kind: &str) -> Result<String> {
        let line = self.next_line("version header")?.to_string();
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 5 || parts[0] != "#" || parts[1] != "eclsm" || !parts[4].starts_with("config=") {
            return format_err(1, format!("missing `# eclsm {kind}` version header"));
        }
        if parts[2] != kind {
            return format_err(1, format!("expected a {kind} file, found {}", parts[2]));
        }
        if parts[3] != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION.to_string(),
                found: parts[3].to_string(),
            });
        }
        Ok(parts[4]["config=".len()..].to_string())
    }

    fn finish(&mut self) -> Result<()> {
        while let Some(l) = self.lines.get(self.next) {
            self.next += 1;
            if !l.trim().is_empty() {
                return format_err(self.next, "trailing data");
            }
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_mesh(mut w: impl Write, mesh: &Mesh, config_hash: &str) -> Result<()> {
    writeln!(w, "{}", header("mesh", config_hash))?;
    writeln!(w, "vertices {} triangles {}", mesh.n_vertices(), mesh.n_triangles())?;
    for (p, f) in mesh.vertices().iter().zip(mesh.flags()) {
        writeln!(w, "{:.16e} {:.16e} {f}", p.r, p.z)?;
    }
    for (t, tag) in mesh.triangles().iter().zip(mesh.tags()) {
        writeln!(w, "{} {} {} {tag}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn read_mesh(r: impl Read) -> Result<Mesh> {
    let mut lines = Lines::new(r)?;
    lines.header("mesh")?;
    let head = lines.fields("mesh size line", 4)?;
    if head[0] != "vertices" || head[2] != "triangles" {
        return format_err(lines.number(), "expected `vertices N triangles M`");
    }
    let nv: usize = lines.parse(&head[1], "vertex count")?;
    let nt: usize = lines.parse(&head[3], "triangle count")?;
    let mut vertices = Vec::with_capacity(nv);
    let mut flags = Vec::with_capacity(nv);
    for _ in 0..nv {
        let f = lines.fields("vertex `r z flag`", 3)?;
        vertices.push(Point2::new(lines.parse(&f[0], "r")?, lines.parse(&f[1], "z")?));
        flags.push(lines.parse::<VertexFlag>(&f[2], "vertex flag")?);
    }
    let mut triangles = Vec::with_capacity(nt);
    let mut tags = Vec::with_capacity(nt);
    for _ in 0..nt {
        let f = lines.fields("triangle `i j k tag`", 4)?;
        triangles.push([
            lines.parse(&f[0], "vertex index")?,
            lines.parse(&f[1], "vertex index")?,
            lines.parse(&f[2], "vertex index")?,
        ]);
        tags.push(lines.parse::<RegionTag>(&f[3], "region tag")?);
    }
    lines.finish()?;
    Mesh::from_parts(vertices, triangles, flags, tags)
}

pub fn write_matrix(mut w: impl Write, m: &MultistaticMatrix, config_hash: &str) -> Result<()> {
    writeln!(w, "{}", header("matrix", config_hash))?;
    writeln!(w, "# convention {}", m.convention)?;
    let band = m.band.map_or("full".to_string(), |b| b.to_string());
    let seed = m.seed.map_or("none".to_string(), |s| s.to_string());
    writeln!(w, "{} {:?} {band} {} {seed}", m.n(), m.noise_level, m.kind)?;
    for z in m.entries() {
        writeln!(w, "{:.16e} {:.16e}", z.re, z.im)?;
    }
    Ok(())
}

pub fn read_matrix(r: impl Read) -> Result<MultistaticMatrix> {
    let mut lines = Lines::new(r)?;
    lines.header("matrix")?;
    let conv = lines.fields("`# convention` line", 3)?;
    if conv[0] != "#" || conv[1] != "convention" {
        return format_err(lines.number(), "expected `# convention <name>`");
    }
    let convention: BandConvention = conv[2]
        .parse()
        .or_else(|_| format_err(lines.number(), format!("unknown convention `{}`", conv[2])))?;
    let head = lines.fields("`N delta M kind seed`", 5)?;
    let n: usize = lines.parse(&head[0], "N")?;
    let delta: f64 = lines.parse(&head[1], "delta")?;
    let band = match head[2].as_str() {
        "full" => None,
        s => Some(lines.parse::<usize>(s, "band M")?),
    };
    let kind: ProbeKind = head[3]
        .parse()
        .or_else(|_| format_err(lines.number(), format!("unknown probe kind `{}`", head[3])))?;
    let seed = match head[4].as_str() {
        "none" => None,
        s => Some(lines.parse::<u64>(s, "seed")?),
    };
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let f = lines.fields("matrix entry `Re Im`", 2)?;
        entries.push(Complex64::new(lines.parse(&f[0], "Re")?, lines.parse(&f[1], "Im")?));
    }
    lines.finish()?;
    let mut m = MultistaticMatrix::new(n, entries, kind)?;
    m.noise_level = delta;
    m.band = band;
    m.seed = seed;
    m.convention = convention;
    Ok(m)
}

pub fn write_indicator_csv(mut w: impl Write, ind: &IndicatorField, config_hash: &str) -> Result<()> {
    let g = &ind.grid;
    writeln!(w, "{}", header("indicator", config_hash))?;
    writeln!(
        w,
        "# grid {:?} {:?} {:?} {:?} {} {} delta {:?}",
        g.r_lo, g.r_hi, g.z_lo, g.z_hi, g.n_r, g.n_z, ind.delta
    )?;
    writeln!(w, "r,z,raw,normalized,epsilon,flag")?;
    let normalized = ind.normalized();
    for l in 0..g.len() {
        let p = g.point(l);
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            p.r,
            p.z,
            ind.raw[l],
            normalized[l],
            ind.epsilon[l],
            ind.flags[l].as_str()
        )?;
    }
    Ok(())
}

/// Reads an indicator CSV. The Morozov residuals are not stored and come back as NaN.
pub fn read_indicator_csv(r: impl Read) -> Result<IndicatorField> {
    let mut lines = Lines::new(r)?;
    lines.header("indicator")?;
    let f = lines.fields("`# grid` line", 10)?;
    if f[0] != "#" || f[1] != "grid" || f[8] != "delta" {
        return format_err(lines.number(), "expected `# grid r_lo r_hi z_lo z_hi n_r n_z delta δ`");
    }
    let grid = SamplingGrid {
        r_lo: lines.parse(&f[2], "r_lo")?,
        r_hi: lines.parse(&f[3], "r_hi")?,
        z_lo: lines.parse(&f[4], "z_lo")?,
        z_hi: lines.parse(&f[5], "z_hi")?,
        n_r: lines.parse(&f[6], "n_r")?,
        n_z: lines.parse(&f[7], "n_z")?,
    };
    let delta = lines.parse(&f[9], "delta")?;
    if lines.next_line("column header")? != "r,z,raw,normalized,epsilon,flag" {
        return format_err(lines.number(), "expected column header `r,z,raw,normalized,epsilon,flag`");
    }
    let n = grid.len();
    let (mut raw, mut epsilon, mut flags) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let f = lines.fields("indicator row", 6)?;
        raw.push(lines.parse(&f[2], "raw")?);
        epsilon.push(lines.parse(&f[4], "epsilon")?);
        flags.push(match f[5].as_str() {
            "converged" => MorozovFlag::Converged,
            "lower_bound" => MorozovFlag::LowerBound,
            "upper_bound" => MorozovFlag::UpperBound,
            other => return format_err(lines.number(), format!("unknown flag `{other}`")),
        });
    }
    lines.finish()?;
    Ok(IndicatorField {
        grid,
        raw,
        epsilon,
        flags,
        residual: vec![f64::NAN; n],
        delta,
    })
}

/// Binary 8-bit PGM of the normalized indicator, `z` increasing upwards.
pub fn write_pgm(mut w: impl Write, ind: &IndicatorField, config_hash: &str) -> Result<()> {
    let g = &ind.grid;
    writeln!(w, "P5")?;
    writeln!(w, "{}", header("indicator-pgm", config_hash))?;
    writeln!(w, "{} {}", g.n_r, g.n_z)?;
    writeln!(w, "255")?;
    let normalized = ind.normalized();
    let mut bytes = Vec::with_capacity(g.len());
    for j in (0..g.n_z).rev() {
        for i in 0..g.n_r {
            bytes.push((normalized[j * g.n_r + i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_field_csv(mut w: impl Write, field: &ComplexField, config_hash: &str) -> Result<()> {
    writeln!(w, "{}", header("field", config_hash))?;
    field.write_csv(&mut w)?;
    Ok(())
}

pub fn save_mesh(path: &Path, mesh: &Mesh, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_mesh(&mut w, mesh, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    read_mesh(File::open(path)?)
}

pub fn save_matrix(path: &Path, m: &MultistaticMatrix, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_matrix(&mut w, m, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<MultistaticMatrix> {
    read_matrix(File::open(path)?)
}

pub fn save_indicator(path: &Path, ind: &IndicatorField, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_indicator_csv(&mut w, ind, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn load_indicator(path: &Path) -> Result<IndicatorField> {
    read_indicator_csv(File::open(path)?)
}

pub fn save_pgm(path: &Path, ind: &IndicatorField, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_pgm(&mut w, ind, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn save_field(path: &Path, field: &ComplexField, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_field_csv(&mut w, field, config_hash)?;
    w.flush()?;
    Ok(())
}
