//! Papers as structured documents, the cleaning and completeness passes,
//! and the knowledge base of paper/implementation exemplars.

mod clean;
mod completeness;
mod document;
mod kb;

pub use clean::{clean_document, is_always_kept, CleanError};
pub use completeness::{keyphrases, validate_completeness};
pub(crate) use completeness::in_lexicon;
pub use document::{
    parse_markdown, slug, BibEntry, Block, Equation, FigureAsset, Heading, PaperDocument, PaperError, Section,
};
pub use kb::{KbEntry, KbError, KnowledgeBase};
