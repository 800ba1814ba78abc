use std::collections::BTreeMap;
use std::path::PathBuf;

use cjrio_core::protocol::{Consent, Variant};
use cjrio_core::Su2Operator;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cjrio",
    version,
    about = "Simulate controlled-joint remote implementation of operators",
    after_help = "Per-party unitaries are given as --u1 ... --uM, each either `preset:NAME` \
                  (identity, pauli-x, pauli-z, hadamard-like, random) or a pair `u,v` of complex \
                  numbers. Missing ones default to the identity."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one sampled branch.
    Simulate(RunArgs),
    /// Run and verify every branch.
    Enumerate(RunArgs),
    /// Sample many runs and compare outcome frequencies with the exact marginals.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Number of joint parties (Bobs).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Number of controllers (Charlies).
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Amplitude of path 0 of the input qubit, `re`, `re+imj` or `imj`.
    #[arg(long, default_value = "0.6", allow_hyphen_values = true, value_parser = parse_complex)]
    pub alpha: Complex64,
    /// Amplitude of path 1 of the input qubit.
    #[arg(long, default_value = "0.8", allow_hyphen_values = true, value_parser = parse_complex)]
    pub beta: Complex64,
    /// Bitmask of controllers that release the channel; bit j-1 is controller j.
    #[arg(long, value_parser = parse_mask)]
    pub consent: Option<u64>,
    /// Bitmask of controllers that publish their last measurement.
    #[arg(long = "consent-final", value_parser = parse_mask)]
    pub consent_final: Option<u64>,
    /// Seed for sampled outcomes and random unitaries.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the subcommand's mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Compare intermediate states with their closed forms and report errata.
    #[arg(long)]
    pub check_paper_eqs: bool,
    #[arg(long, value_enum, default_value_t = VariantArg::Cjrio)]
    pub variant: VariantArg,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of sampled runs.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sample,
    Enumerate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sample => "sample",
            Mode::Enumerate => "enumerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cjrio,
    Jrio,
    Crio,
    Rio,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Cjrio => Variant::Cjrio,
            VariantArg::Jrio => Variant::Jrio,
            VariantArg::Crio => Variant::Crio,
            VariantArg::Rio => Variant::Rio,
        }
    }
}

/// Parses `0.6`, `-0.3+0.4j`, `0.5j`, `-j` and the same with `i`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("invalid complex number `{s}`");
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('j').or_else(|| t.strip_suffix('i')) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |part: &str| -> Result<f64, String> {
        match part {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            p => p.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().map_err(|_| bad())?;
            Ok(Complex64::new(re, imag(&body[i..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

pub fn parse_mask(s: &str) -> Result<u64, String> {
    let parsed = if let Some(b) = s.strip_prefix("0b") {
        u64::from_str_radix(b, 2)
    } else if let Some(h) = s.strip_prefix("0x") {
        u64::from_str_radix(h, 16)
    } else {
        s.parse()
    };
    parsed.map_err(|_| format!("invalid bitmask `{s}`"))
}

/// Pulls `--u<i> VALUE` and `--u<i>=VALUE` out of the argument list, since
/// the set of flag names depends on M.
pub fn extract_unitary_flags(args: Vec<String>) -> Result<(Vec<String>, BTreeMap<usize, String>), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut found = BTreeMap::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(index) = unitary_flag_index(&arg) else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match arg.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (arg.clone(), None),
        };
        let value = match inline {
            Some(v) => v,
            None => iter.next().ok_or_else(|| CliError::Config(format!("{name} needs a value")))?,
        };
        if index == 0 {
            return Err(CliError::Config("parties are numbered from 1: use --u1 ... --uM".into()));
        }
        if found.insert(index, value).is_some() {
            return Err(CliError::Config(format!("{name} given twice")));
        }
    }
    Ok((rest, found))
}

fn unitary_flag_index(arg: &str) -> Option<usize> {
    let digits = arg.strip_prefix("--u")?;
    let digits = digits.split_once('=').map_or(digits, |(d, _)| d);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Resolves the per-party unitaries. Random presets draw, in party order,
/// from a generator seeded with `seed` on its own stream.
pub fn resolve_unitaries(
    specs: &BTreeMap<usize, String>,
    m: usize,
    seed: u64,
) -> Result<Vec<(String, Su2Operator)>, CliError> {
    if let Some((&i, _)) = specs.iter().find(|(&i, _)| i > m) {
        return Err(CliError::Config(format!("--u{i} given but there are only {m} joint parties")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (1..=m)
        .map(|i| {
            let spec = specs.get(&i).cloned().unwrap_or_else(|| "preset:identity".to_string());
            let op = parse_unitary(&spec, &mut rng).map_err(|e| CliError::Config(format!("--u{i}: {e}")))?;
            Ok((spec, op))
        })
        .collect()
}

fn parse_unitary(spec: &str, rng: &mut ChaCha8Rng) -> Result<Su2Operator, String> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return match name {
            "identity" => Ok(Su2Operator::identity()),
            "pauli-x" => Ok(Su2Operator::pauli_x()),
            "pauli-z" => Ok(Su2Operator::pauli_z()),
            "hadamard-like" => Ok(Su2Operator::hadamard_like()),
            "random" => Ok(Su2Operator::random(rng)),
            other => Err(format!("unknown preset `{other}`")),
        };
    }
    let (u, v) = spec.split_once(',').ok_or_else(|| format!("expected `preset:NAME` or `u,v`, got `{spec}`"))?;
    Su2Operator::new(parse_complex(u)?, parse_complex(v)?).map_err(|e| e.to_string())
}

/// Consent per controller from the two bitmasks; absent masks grant all.
pub fn consent_from_masks(n: usize, entangle: Option<u64>, release: Option<u64>) -> Result<Vec<Consent>, CliError> {
    for (flag, mask) in [("--consent", entangle), ("--consent-final", release)] {
        if let Some(mask) = mask {
            if n < 64 && mask >> n != 0 {
                return Err(CliError::Config(format!("{flag} {mask:#b} names controllers beyond the {n} present")));
            }
        }
    }
    let bit = |mask: Option<u64>, j: usize| mask.is_none_or(|m| j < 64 && (m >> j) & 1 == 1);
    Ok((0..n).map(|j| Consent { entangle: bit(entangle, j), release: bit(release, j) }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("0.6"), Ok(c(0.6, 0.0)));
        assert_eq!(parse_complex("-0.3+0.4j"), Ok(c(-0.3, 0.4)));
        assert_eq!(parse_complex("0.3-0.4i"), Ok(c(0.3, -0.4)));
        assert_eq!(parse_complex("0.5j"), Ok(c(0.0, 0.5)));
        assert_eq!(parse_complex("-j"), Ok(c(0.0, -1.0)));
        assert_eq!(parse_complex("1e-1+2E-1j"), Ok(c(0.1, 0.2)));
        assert_eq!(parse_complex(" 1 + 1j "), Ok(c(1.0, 1.0)));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("").is_err());
        assert!(parse_complex("1+xj").is_err());
    }

    #[test]
    fn masks() {
        assert_eq!(parse_mask("5"), Ok(5));
        assert_eq!(parse_mask("0b101"), Ok(5));
        assert_eq!(parse_mask("0x1f"), Ok(31));
        assert!(parse_mask("two").is_err());
    }

    #[test]
    fn unitary_flags_are_pulled_out() {
        let args: Vec<String> = ["cjrio", "simulate", "--u1", "preset:pauli-x", "--m", "2", "--u2=0,1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (rest, found) = extract_unitary_flags(args).unwrap();
        assert_eq!(rest, ["cjrio", "simulate", "--m", "2"]);
        assert_eq!(found[&1], "preset:pauli-x");
        assert_eq!(found[&2], "0,1");
    }

    #[test]
    fn unitary_flag_errors() {
        let to = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(extract_unitary_flags(to(&["cjrio", "--u1"])).is_err());
        assert!(extract_unitary_flags(to(&["cjrio", "--u0", "preset:identity"])).is_err());
        assert!(extract_unitary_flags(to(&["cjrio", "--u1=a", "--u1=b"])).is_err());
        let (rest, found) = extract_unitary_flags(to(&["cjrio", "--unit", "--u"])).unwrap();
        assert_eq!(rest.len(), 3);
        assert!(found.is_empty());
    }

    #[test]
    fn unitaries_default_to_identity() {
        let mut specs = BTreeMap::new();
        specs.insert(2, "0,1".to_string());
        let ops = resolve_unitaries(&specs, 2, 0).unwrap();
        assert_eq!(ops[0].1, Su2Operator::identity());
        assert_eq!(ops[1].1.v(), Complex64::new(1.0, 0.0));
        specs.insert(3, "preset:identity".to_string());
        assert!(resolve_unitaries(&specs, 2, 0).is_err());
    }

    #[test]
    fn random_presets_follow_the_seed() {
        let mut specs = BTreeMap::new();
        specs.insert(1, "preset:random".to_string());
        let a = resolve_unitaries(&specs, 1, 9).unwrap();
        let b = resolve_unitaries(&specs, 1, 9).unwrap();
        let c = resolve_unitaries(&specs, 1, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_unitaries_are_rejected() {
        let mut specs = BTreeMap::new();
        specs.insert(1, "1,1".to_string());
        assert!(resolve_unitaries(&specs, 1, 0).is_err());
        specs.insert(1, "preset:nope".to_string());
        assert!(resolve_unitaries(&specs, 1, 0).is_err());
    }

    #[test]
    fn consent_bits() {
        let c = consent_from_masks(3, Some(0b101), None).unwrap();
        assert_eq!(c.iter().map(|c| c.entangle).collect::<Vec<_>>(), [true, false, true]);
        assert!(c.iter().all(|c| c.release));
        assert!(consent_from_masks(1, Some(2), None).is_err());
        assert!(consent_from_masks(0, None, None).unwrap().is_empty());
    }
}
