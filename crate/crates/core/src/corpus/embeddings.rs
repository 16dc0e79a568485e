use std::io::BufRead;

use builder_autodiff::Tensor;

use super::{CorpusError, Vocabulary};

/// Overwrites rows of `table` (`[vocab × dim]`) with vectors from a text
/// embedding file (`token v1 … v_dim` per line). Returns how many vocabulary
/// tokens were found; the remaining rows keep their random initialization.
pub fn load_embeddings(reader: impl BufRead, vocab: &Vocabulary, table: &mut Tensor) -> Result<usize, CorpusError> {
    let (rows, dim) = table.dims2();
    assert_eq!(rows, vocab.len(), "embedding table must have one row per token");
    let mut found = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        if !vocab.contains(token) {
            continue;
        }
        let values = parts
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CorpusError::Embedding {
                line: i + 1,
                message: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(CorpusError::Embedding {
                line: i + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let id = vocab.id(token);
        table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
        found += 1;
    }
    Ok(found)
}
