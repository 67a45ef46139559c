//! Text embeddings for cells and field contexts. The default provider
//! hashes character n-grams into a fixed-width signed vector; a file-backed
//! provider can inject precomputed embeddings from any external model.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::table::{Cell, CellKind, Table};
use crate::{Error, Result};

/// Maximum number of whitespace tokens kept from a cell before embedding.
pub const MAX_CELL_TOKENS: usize = 30;

/// A deterministic text embedder. Implementations must be thread-safe and
/// produce the same vector for the same input.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// 64-bit FNV-1a hash, optionally seeded.
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Signed hashed character n-grams, L2-normalized. The empty string maps to
/// the zero vector.
#[derive(Debug, Clone)]
pub struct HashedNGramEmbedder {
    pub dim: usize,
    pub ngram_sizes: Vec<usize>,
    pub seed: u64,
}

impl HashedNGramEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashedNGramEmbedder {
            dim,
            ngram_sizes: vec![2, 3],
            seed,
        }
    }
}

impl Default for HashedNGramEmbedder {
    fn default() -> Self {
        HashedNGramEmbedder::new(64, 0)
    }
}

impl EmbeddingProvider for HashedNGramEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dim];
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return v;
        }
        for &n in &self.ngram_sizes {
            if chars.len() < n {
                continue;
            }
            for w in chars.windows(n) {
                let gram: String = w.iter().collect();
                let h = fnv1a64(gram.as_bytes(), self.seed);
                let idx = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
                v[idx] += sign;
            }
        }
        // Short strings below every n-gram size hash as a whole.
        if chars.len() < self.ngram_sizes.iter().copied().min().unwrap_or(2) {
            let h = fnv1a64(text.as_bytes(), self.seed);
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        }
        l2_normalize(&mut v);
        v
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Precomputed embeddings loaded from a JSONL file of
/// `{"text_hash": "<fnv1a64 hex>", "vector": [...]}` entries. Unknown texts
/// embed as the zero vector.
pub struct ExternalProvider {
    dim: usize,
    by_hash: BTreeMap<u64, Vec<f64>>,
}

#[derive(Deserialize)]
struct ExternalEntry {
    text_hash: String,
    vector: Vec<f64>,
}

impl ExternalProvider {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut by_hash = BTreeMap::new();
        let mut dim = 0usize;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ExternalEntry = serde_json::from_str(&line)?;
            let hash = u64::from_str_radix(entry.text_hash.trim_start_matches("0x"), 16).map_err(
                |_| Error::InvalidConfig(format!("bad text_hash '{}'", entry.text_hash)),
            )?;
            if dim == 0 {
                dim = entry.vector.len();
            } else if dim != entry.vector.len() {
                return Err(Error::DimensionMismatch(format!(
                    "embedding rows of width {} and {}",
                    dim,
                    entry.vector.len()
                )));
            }
            by_hash.insert(hash, entry.vector);
        }
        if dim == 0 {
            return Err(Error::EmptyInput("no embeddings in file".to_string()));
        }
        Ok(ExternalProvider { dim, by_hash })
    }

    /// Hash key used in the embedding file for a given text.
    pub fn text_hash(text: &str) -> String {
        format!("{:016x}", fnv1a64(text.as_bytes(), 0))
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        self.by_hash
            .get(&fnv1a64(text.as_bytes(), 0))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }
}

fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        text.trim().to_string()
    } else {
        tokens[..max_tokens].join(" ")
    }
}

/// Embed one cell: blanks map to the zero vector, numbers embed their
/// canonical decimal rendering, text embeds its first 30 tokens.
pub fn embed_cell(provider: &dyn EmbeddingProvider, cell: &Cell) -> Vec<f64> {
    match &cell.kind {
        CellKind::Blank => vec![0.0; provider.dimension()],
        CellKind::Number(v) => provider.embed(&format!("{v}")),
        _ => provider.embed(&truncate_tokens(&cell.raw, MAX_CELL_TOKENS)),
    }
}

/// Number of leading cells contributing to the field context embedding.
pub const FIELD_CONTEXT_CELLS: usize = 50;

/// Field-level context embedding: the header (weight 2), the mean of the
/// first 50 cell embeddings (weight 1) and the mean of the other fields'
/// header embeddings (weight 0.5), L2-normalized.
pub fn embed_field_context(
    provider: &dyn EmbeddingProvider,
    table: &Table,
    field_index: usize,
) -> Result<Vec<f64>> {
    let field = table.field(field_index)?;
    let dim = provider.dimension();
    let mut out = vec![0.0f64; dim];

    let header = provider.embed(&truncate_tokens(&field.header, MAX_CELL_TOKENS));
    for (o, h) in out.iter_mut().zip(header.iter()) {
        *o += 2.0 * h;
    }

    let take = field.cells.len().min(FIELD_CONTEXT_CELLS);
    if take > 0 {
        let mut mean = vec![0.0f64; dim];
        for cell in &field.cells[..take] {
            let e = embed_cell(provider, cell);
            for (m, x) in mean.iter_mut().zip(e.iter()) {
                *m += x;
            }
        }
        for (o, m) in out.iter_mut().zip(mean.iter()) {
            *o += m / take as f64;
        }
    }

    let others: Vec<&str> = table
        .fields
        .iter()
        .filter(|f| f.index != field_index)
        .map(|f| f.header.as_str())
        .collect();
    if !others.is_empty() {
        let mut mean = vec![0.0f64; dim];
        for h in &others {
            let e = provider.embed(&truncate_tokens(h, MAX_CELL_TOKENS));
            for (m, x) in mean.iter_mut().zip(e.iter()) {
                *m += x;
            }
        }
        for (o, m) in out.iter_mut().zip(mean.iter()) {
            *o += 0.5 * m / others.len() as f64;
        }
    }

    l2_normalize(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{classify_cell, parse_table};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blank_is_zero_and_deterministic() {
        let p = HashedNGramEmbedder::default();
        assert_eq!(embed_cell(&p, &classify_cell("")), vec![0.0; 64]);
        let a = embed_cell(&p, &classify_cell("ACCEPTED"));
        let b = embed_cell(&p, &classify_cell("ACCEPTED"));
        assert_eq!(a, b);
        assert_eq!(a.len(), p.dimension());
        assert!(a.iter().all(|x| x.is_finite()));
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_truncation_at_thirty() {
        let p = HashedNGramEmbedder::default();
        let long: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let prefix = long[..30].join(" ");
        let a = embed_cell(&p, &classify_cell(&long.join(" ")));
        let b = embed_cell(&p, &classify_cell(&prefix));
        assert_eq!(a, b);
    }

    #[test]
    fn number_embeds_canonical_rendering() {
        let p = HashedNGramEmbedder::default();
        let a = embed_cell(&p, &classify_cell("76"));
        let b = embed_cell(&p, &classify_cell(" 76 "));
        let c = embed_cell(&p, &classify_cell("76.0"));
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn field_context_rules() {
        let p = HashedNGramEmbedder::default();
        // Single field, all blank cells: proportional to the header embedding.
        let rows = vec![
            vec!["hdr".to_string()],
            vec![String::new()],
            vec![String::new()],
        ];
        let t = parse_table(&rows, true, "t").unwrap();
        let ctx = embed_field_context(&p, &t, 0).unwrap();
        let header = p.embed("hdr");
        let dot: f64 = ctx.iter().zip(header.iter()).map(|(a, b)| a * b).sum();
        assert!(
            (dot - 1.0).abs() < 1e-9,
            "context should align with the header"
        );

        // Permuting the other fields leaves the output unchanged.
        let rows = vec![
            vec!["a".into(), "b".into(), "c".into()],
            vec!["1".into(), "2".into(), "3".into()],
        ];
        let t1 = parse_table(&rows, true, "t1").unwrap();
        let rows = vec![
            vec!["a".into(), "c".into(), "b".into()],
            vec!["1".into(), "3".into(), "2".into()],
        ];
        let t2 = parse_table(&rows, true, "t2").unwrap();
        assert_eq!(
            embed_field_context(&p, &t1, 0).unwrap(),
            embed_field_context(&p, &t2, 0).unwrap()
        );
    }

    #[test]
    fn cells_beyond_fifty_ignored() {
        let p = HashedNGramEmbedder::default();
        let mut rows: Vec<Vec<String>> = vec![vec!["h".to_string()]];
        rows.extend((0..60).map(|i| vec![format!("v{i}")]));
        let t1 = parse_table(&rows, true, "t").unwrap();
        rows[55] = vec!["changed".to_string()];
        let t2 = parse_table(&rows, true, "t").unwrap();
        assert_eq!(
            embed_field_context(&p, &t1, 0).unwrap(),
            embed_field_context(&p, &t2, 0).unwrap()
        );
    }

    #[test]
    fn disjoint_alphabets_nearly_orthogonal() {
        let p = HashedNGramEmbedder::new(256, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let word = |rng: &mut ChaCha8Rng, lo: u8| -> String {
            (0..8)
                .map(|_| (lo + rng.gen_range(0..10u8)) as char)
                .collect()
        };
        let mut total = 0.0;
        let n = 200;
        for _ in 0..n {
            let a = p.embed(&word(&mut rng, b'a'));
            let b = p.embed(&word(&mut rng, b'n'));
            let cos: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            total += cos.abs();
        }
        let mean_cos = total / n as f64;
        assert!(mean_cos < 0.2, "mean |cos| = {mean_cos}");
    }

    #[test]
    fn external_provider_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let h = ExternalProvider::text_hash("hello");
        std::fs::write(
            &path,
            format!("{{\"text_hash\":\"{h}\",\"vector\":[1.0,0.0,0.0]}}\n"),
        )
        .unwrap();
        let p = ExternalProvider::load(&path).unwrap();
        assert_eq!(p.dimension(), 3);
        assert_eq!(p.embed("hello"), vec![1.0, 0.0, 0.0]);
        assert_eq!(p.embed("other"), vec![0.0, 0.0, 0.0]);
    }
}
