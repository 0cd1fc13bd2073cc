//! Pre-annotated documents, oracle labels, vocabularies and embedding files.

mod cooc;
mod document;
mod embeddings;
mod loader;
mod oracle;
mod vocab;

pub use cooc::CooccurrenceTable;
pub use document::{AnnotatedDocument, Entity, Mention, Split, Truncation};
pub use embeddings::{load_entity_embeddings, load_word_embeddings, write_embedding_file, EmbeddingFile};
pub(crate) use embeddings::uniform_matrix;
pub use loader::{load_corpus, read_corpus, write_corpus, CorpusReader};
pub use oracle::{oracle_entity_labels, oracle_sentence_labels};
pub use vocab::{EntityVocab, Vocab, PAD, SEP, START, STOP, UNK, UNK_ENTITY};
