//! File formats.
//!
//! * SMT1 adjacency text: header `SMT1 n L`, then `l i j v` per upper-triangular
//!   nonzero, 1-based, `v` in {-1, 1}.
//! * Factor CSV: `# factor <name> n=<rows> r=<cols>` followed by one
//!   comma-separated row per line.
//! * Label CSV: `layer,<column>` header, 1-based layers and groups.
//! * Probability dump: 8-byte magic, three little-endian `u64` dims, then
//!   column-major little-endian `f64` values.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::linalg::OrthonormalFactor;
use crate::netgen::LayerLabels;
use crate::tensor::{ProbabilityTensor, SignedAdjacencyTensor, Tensor3};
use crate::Matrix;

pub const PROBABILITY_MAGIC: &[u8; 8] = b"DMPLPT01";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn write_smt1(a: &SignedAdjacencyTensor, mut out: impl Write) -> Result<()> {
    writeln!(out, "SMT1 {} {}", a.n(), a.layers())?;
    for (l, i, j, v) in a.triplets() {
        writeln!(out, "{} {} {} {}", l + 1, i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_smt1(input: impl BufRead) -> Result<SignedAdjacencyTensor> {
    let mut lines = input.lines().enumerate().filter_map(|(k, line)| match line {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((k + 1, other)),
    });
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, layers) = match fields.as_slice() {
        ["SMT1", n, l] => (
            n.parse::<usize>().map_err(|e| parse_err(hl, format!("n: {e}")))?,
            l.parse::<usize>().map_err(|e| parse_err(hl, format!("L: {e}")))?,
        ),
        _ => return Err(parse_err(hl, format!("expected `SMT1 n L`, got `{header}`"))),
    };
    let mut triplets = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(k, format!("expected `l i j v`, got `{line}`")));
        }
        let idx = |s: &str, name: &str, max: usize| -> Result<usize> {
            let v: usize = s.parse().map_err(|e| parse_err(k, format!("{name}: {e}")))?;
            if v == 0 || v > max {
                return Err(parse_err(k, format!("{name} = {v} out of range 1..={max}")));
            }
            Ok(v - 1)
        };
        let (l, i, j) = (idx(f[0], "l", layers)?, idx(f[1], "i", n)?, idx(f[2], "j", n)?);
        let v: i8 = f[3].parse().map_err(|e| parse_err(k, format!("v: {e}")))?;
        if v != 1 && v != -1 {
            return Err(parse_err(k, format!("value {v} not in {{-1, 1}}")));
        }
        if i == j {
            return Err(parse_err(k, format!("diagonal entry ({}, {})", i + 1, j + 1)));
        }
        if i > j {
            return Err(parse_err(k, format!("entry ({}, {}) below the diagonal", i + 1, j + 1)));
        }
        triplets.push((l, i, j, v));
    }
    SignedAdjacencyTensor::from_triplets(n, layers, &triplets)
}

pub fn write_factor_csv(name: &str, f: &OrthonormalFactor, mut out: impl Write) -> Result<()> {
    let m = f.matrix();
    writeln!(out, "# factor {name} n={} r={}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a factor CSV, returning the name and the checked factor.
pub fn read_factor_csv(input: impl BufRead) -> Result<(String, OrthonormalFactor)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty input"))??;
    let f: Vec<&str> = header.split_whitespace().collect();
    let (name, rows, cols) = match f.as_slice() {
        ["#", "factor", name, n, r] => {
            let dim = |s: &str, key: &str| -> Result<usize> {
                s.strip_prefix(key)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| parse_err(1, format!("bad dimension field `{s}`")))
            };
            (name.to_string(), dim(n, "n=")?, dim(r, "r=")?)
        }
        _ => return Err(parse_err(1, format!("expected `# factor <name> n=<n> r=<r>`, got `{header}`"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(k + 2, e.to_string())))
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(parse_err(k + 2, format!("{} columns, expected {cols}", vals.len())));
        }
        data.extend(vals);
        count += 1;
    }
    if count != rows {
        return Err(Error::Dimension(format!("{count} rows, header says {rows}")));
    }
    Ok((name, OrthonormalFactor::new(Matrix::from_row_slice(rows, cols, &data))?))
}

/// `layer,<column>` rows with 1-based indices.
pub fn write_labels_csv(column: &str, labels: &LayerLabels, mut out: impl Write) -> Result<()> {
    writeln!(out, "layer,{column}")?;
    for (l, g) in labels.one_based().into_iter().enumerate() {
        writeln!(out, "{},{g}", l + 1)?;
    }
    Ok(())
}

pub fn read_labels_csv(input: impl BufRead, num_groups: usize) -> Result<LayerLabels> {
    let mut groups = Vec::new();
    for (k, line) in input.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (layer, group) = line.split_once(',').ok_or_else(|| parse_err(k + 1, "expected `layer,group`"))?;
        let layer: usize = layer.trim().parse().map_err(|e| parse_err(k + 1, format!("layer: {e}")))?;
        let group: usize = group.trim().parse().map_err(|e| parse_err(k + 1, format!("group: {e}")))?;
        if layer != groups.len() + 1 || group == 0 {
            return Err(parse_err(k + 1, "layers must be consecutive from 1 and groups 1-based"));
        }
        groups.push(group - 1);
    }
    LayerLabels::new(groups, num_groups)
}

pub fn write_probability_dump(p: &ProbabilityTensor, mut out: impl Write) -> Result<()> {
    out.write_all(PROBABILITY_MAGIC)?;
    for d in p.tensor().dims() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in p.tensor().as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_probability_dump(mut input: impl Read) -> Result<ProbabilityTensor> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != PROBABILITY_MAGIC {
        return Err(parse_err(0, "not a probability dump"));
    }
    let mut dims = [0usize; 3];
    let mut word = [0u8; 8];
    for d in dims.iter_mut() {
        input.read_exact(&mut word)?;
        *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| parse_err(0, "dimension overflow"))?;
    }
    let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| parse_err(0, "dimension overflow"))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    ProbabilityTensor::new(Tensor3::from_vec(dims, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::random_orthonormal;
    use crate::netgen::{build_ground_truth, sample_adjacency, LatentDist, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance() -> (ProbabilityTensor, SignedAdjacencyTensor) {
        let cfg = ModelConfig {
            n: 25,
            layers: 6,
            k: vec![2, 2],
            pi: vec![],
            latent: LatentDist::TruncatedNormal { sigma: 1.0, covariance: None },
            b_range: (-0.5, 0.5),
            seed: 1,
        };
        let gt = build_ground_truth(&cfg).unwrap();
        let a = sample_adjacency(&gt.p, 2);
        (gt.p, a)
    }

    #[test]
    fn smt1_round_trip() {
        let (_, a) = instance();
        let mut buf = Vec::new();
        write_smt1(&a, &mut buf).unwrap();
        let back = read_smt1(buf.as_slice()).unwrap();
        assert_eq!(back.tensor(), a.tensor());
    }

    #[test]
    fn smt1_example() {
        let a = read_smt1("SMT1 3 2\n1 1 2 1\n2 2 3 -1\n".as_bytes()).unwrap();
        assert_eq!(a.tensor().get(1, 0, 0).unwrap(), 1.0);
        assert_eq!(a.tensor().get(2, 1, 1).unwrap(), -1.0);
        assert_eq!(a.triplets().len(), 2);
    }

    #[test]
    fn smt1_rejects_bad_input() {
        for bad in [
            "SMT1 3 1\n1 2 2 1\n",
            "SMT1 3 1\n1 1 2 2\n",
            "SMT1 3 1\n1 1 4 1\n",
            "SMT1 3 1\n2 1 2 1\n",
            "SMT1 3 1\n1 3 2 1\n",
            "SMT2 3 1\n",
            "SMT1 3 1\n1 1 2\n",
            "",
        ] {
            assert!(read_smt1(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn factor_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_orthonormal(9, 3, &mut rng);
        let mut buf = Vec::new();
        write_factor_csv("U", &f, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# factor U n=9 r=3\n"));
        let (name, back) = read_factor_csv(buf.as_slice()).unwrap();
        assert_eq!(name, "U");
        assert_eq!(back, f);
    }

    #[test]
    fn labels_round_trip() {
        let labels = LayerLabels::new(vec![0, 2, 1, 2], 3).unwrap();
        let mut buf = Vec::new();
        write_labels_csv("group", &labels, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "layer,group\n1,1\n2,3\n3,2\n4,3\n");
        assert_eq!(read_labels_csv(buf.as_slice(), 3).unwrap(), labels);
    }

    #[test]
    fn probability_dump_round_trip() {
        let (p, _) = instance();
        let mut buf = Vec::new();
        write_probability_dump(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 24 + 8 * 25 * 25 * 6);
        assert_eq!(read_probability_dump(buf.as_slice()).unwrap(), p);
        buf[0] = b'X';
        assert!(read_probability_dump(buf.as_slice()).is_err());
    }
}
