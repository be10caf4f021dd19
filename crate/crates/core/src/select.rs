//! Reading the model's choice out of free text, and the ask / re-ask /
//! fallback exchange around it.
//!
//! Expected reply shape:
//!
//! ```text
//! <reasoning> some sentences </reasoning>
//!
//! Selected action is : 3
//! ```
//!
//! The parser is tolerant: the index is the first integer after the last
//! (case-insensitive) "selected action", or the last standalone integer
//! when that phrase is missing.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use serde::{Deserialize, Serialize};

const ANCHOR: &str = "selected action";

/// Appended as a second user message when the first reply did not parse.
pub const REASK_PROMPT: &str = "Answer with the number of the selected action only.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// 1-based menu index.
    pub index: usize,
    pub reasoning: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseError {
    NoNumber,
    /// Saturates at `u64::MAX` for absurdly long digit runs.
    OutOfRange(u64),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::NoNumber => f.write_str("reply contains no action number"),
            ParseError::OutOfRange(n) => write!(f, "action number {n} is not on the menu"),
        }
    }
}

fn find_ci(haystack_lower: &str, needle: &str) -> Option<usize> {
    haystack_lower.find(needle)
}

fn extract_reasoning(text: &str, lower: &str) -> Option<String> {
    let open = find_ci(lower, "<reasoning>")? + "<reasoning>".len();
    let close = open + find_ci(&lower[open..], "</reasoning>")?;
    Some(String::from(text[open..close].trim()))
}

fn parse_digits(digits: &[u8]) -> u64 {
    digits.iter().fold(0u64, |acc, d| {
        acc.saturating_mul(10).saturating_add(u64::from(d - b'0'))
    })
}

/// Maximal ASCII digit runs as `(start, end)` byte ranges.
fn digit_runs(bytes: &[u8]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut i = 0;
    core::iter::from_fn(move || {
        while i < bytes.len() && !bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        Some((start, i))
    })
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Not glued to a word ("gpt3", "2nd") and not part of a decimal ("3.5").
fn is_standalone(bytes: &[u8], start: usize, end: usize) -> bool {
    let before = start.checked_sub(1).map(|i| bytes[i]);
    let after = bytes.get(end).copied();
    if before.is_some_and(is_word_byte) || after.is_some_and(is_word_byte) {
        return false;
    }
    let decimal_before = before == Some(b'.')
        && start >= 2
        && bytes[start - 2].is_ascii_digit();
    let decimal_after = after == Some(b'.') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit);
    !(decimal_before || decimal_after)
}

fn extract_number(text: &str, lower: &str) -> Option<u64> {
    let bytes = text.as_bytes();
    if let Some(pos) = lower.rfind(ANCHOR) {
        let from = pos + ANCHOR.len();
        return digit_runs(&bytes[from..])
            .next()
            .map(|(s, e)| parse_digits(&bytes[from + s..from + e]));
    }
    digit_runs(bytes)
        .filter(|&(s, e)| is_standalone(bytes, s, e))
        .last()
        .map(|(s, e)| parse_digits(&bytes[s..e]))
}

/// Extracts a 1-based menu index and optional reasoning from a reply.
///
/// When "selected action" is present but no integer follows its last
/// occurrence, the reply is treated as having no number.
pub fn parse_selection(text: &str, menu_size: usize) -> Result<Selection, ParseError> {
    let lower = text.to_ascii_lowercase();
    let n = extract_number(text, &lower).ok_or(ParseError::NoNumber)?;
    if n == 0 || n > menu_size as u64 {
        return Err(ParseError::OutOfRange(n));
    }
    Ok(Selection {
        index: n as usize,
        reasoning: extract_reasoning(text, &lower),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub content: String,
    pub finish_reason: Option<String>,
    /// Response body exactly as received.
    pub raw_body: String,
    pub correlation_id: Option<String>,
    /// Transport attempts spent, including retries.
    pub attempts: u32,
}

impl ChatReply {
    pub fn text(content: impl Into<String>) -> Self {
        let content = content.into();
        ChatReply {
            raw_body: content.clone(),
            content,
            finish_reason: None,
            correlation_id: None,
            attempts: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendErrorKind {
    /// Network failure or retries exhausted.
    Transport,
    /// Non-transient HTTP status.
    Api { status: u16 },
    /// Response body did not match the expected schema.
    Protocol,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BackendErrorKind::Transport => write!(f, "transport error: {}", self.message),
            BackendErrorKind::Api { status } => write!(f, "API error {status}: {}", self.message),
            BackendErrorKind::Protocol => write!(f, "protocol error: {}", self.message),
        }
    }
}

/// One chat-completions round trip. Implementations must be safe to call
/// with independent message lists; no state is carried between calls.
pub trait ChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, BackendError> {
        (**self).complete(messages)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, BackendError> {
        (**self).complete(messages)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryPath {
    Direct,
    Reask,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Vec<ChatMessage>,
    pub reply: ChatReply,
    pub parsed: Result<Selection, ParseError>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLog {
    pub exchanges: Vec<Exchange>,
    pub path: QueryPath,
}

/// Asks once, re-asks once on an unparseable reply, then gives up and
/// returns `None` so the caller can pick uniformly at random.
pub fn query_selection<B: ChatBackend + ?Sized>(
    backend: &B,
    system: &str,
    user: &str,
    menu_size: usize,
) -> Result<(Option<Selection>, QueryLog), BackendError> {
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(user)];
    let mut exchanges = Vec::with_capacity(2);

    for path in [QueryPath::Direct, QueryPath::Reask] {
        if path == QueryPath::Reask {
            messages.push(ChatMessage::user(REASK_PROMPT));
        }
        let reply = backend.complete(&messages)?;
        let parsed = parse_selection(&reply.content, menu_size);
        exchanges.push(Exchange {
            request: messages.clone(),
            reply,
            parsed: parsed.clone(),
        });
        if let Ok(selection) = parsed {
            return Ok((Some(selection), QueryLog { exchanges, path }));
        }
    }
    Ok((
        None,
        QueryLog {
            exchanges,
            path: QueryPath::Fallback,
        },
    ))
}

/// Serves recorded replies in order, refusing requests that differ from
/// what was recorded.
#[derive(Debug)]
pub struct RecordedBackend<'a> {
    exchanges: &'a [Exchange],
    next: Cell<usize>,
}

impl<'a> RecordedBackend<'a> {
    pub fn new(exchanges: &'a [Exchange]) -> Self {
        RecordedBackend { exchanges, next: Cell::new(0) }
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.len() - self.next.get()
    }
}

impl ChatBackend for RecordedBackend<'_> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, BackendError> {
        let i = self.next.get();
        let Some(ex) = self.exchanges.get(i) else {
            return Err(BackendError {
                kind: BackendErrorKind::Protocol,
                message: String::from("recorded exchanges exhausted"),
            });
        };
        if ex.request.as_slice() != messages {
            return Err(BackendError {
                kind: BackendErrorKind::Protocol,
                message: String::from("request differs from the recorded exchange"),
            });
        }
        self.next.set(i + 1);
        Ok(ex.reply.clone())
    }
}

/// Re-runs the query protocol against a recorded log.
pub fn replay_query(log: &QueryLog, menu_size: usize) -> Result<(Option<Selection>, QueryLog), BackendError> {
    let first = log.exchanges.first().ok_or_else(|| BackendError {
        kind: BackendErrorKind::Protocol,
        message: String::from("empty query log"),
    })?;
    let (system, user) = match first.request.as_slice() {
        [s, u, ..] if s.role == Role::System && u.role == Role::User => (&s.content, &u.content),
        _ => {
            return Err(BackendError {
                kind: BackendErrorKind::Protocol,
                message: String::from("recorded request is not system + user"),
            })
        }
    };
    let backend = RecordedBackend::new(&log.exchanges);
    query_selection(&backend, system, user, menu_size)
}
