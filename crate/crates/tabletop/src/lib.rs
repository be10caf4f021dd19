//! File formats, the chat-completions client and the command-line driver
//! around `tabletop-core`.

pub mod cli;
pub mod experiment;
pub mod export;
pub mod llm;
pub mod prompt;
pub mod transcript_file;
