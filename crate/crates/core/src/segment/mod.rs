//! Rule-based decomposition of a reasoning trace into atomic segments.
//!
//! The pass is deterministic and lossless: sentences partition the trace
//! byte-for-byte, segments are greedy merges of sentences, and no boundary
//! ever falls inside a detected code span. Boundaries open on transition
//! markers ("wait", "alternatively", …) or when a segment would outgrow
//! `max_chars` while already holding at least `min_chars`.

use serde::{Deserialize, Serialize};

/// A minimal split unit: either a prose sentence or one whole code span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// Byte span `[start, end)` into the trace.
    pub span: (usize, usize),
    pub is_code: bool,
}

/// A merged run of sentences; the unit the thought-tree is built over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// 0-based position in the trace.
    pub index: usize,
    pub text: String,
    /// Byte span `[start, end)` into the trace.
    pub span: (usize, usize),
    pub sentence_count: usize,
    /// The configured marker this segment opens with, when the boundary
    /// came from the marker rule; `None` means the segment is initial or
    /// was opened by the length rule.
    pub starts_with_marker: Option<String>,
}

/// Tunables for the greedy merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Lowercased transition words that force a boundary.
    pub markers: Vec<String>,
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            markers: default_markers(),
            min_chars: 40,
            max_chars: 600,
        }
    }
}

impl SegmentConfig {
    /// Tight thresholds used by the bundled figure fixtures; small enough
    /// that a short opening sentence closes at the first paragraph break.
    pub fn fixture() -> Self {
        Self {
            markers: default_markers(),
            min_chars: 40,
            max_chars: 60,
        }
    }
}

/// Default transition markers. Only "wait" and "alternatively" are load
/// bearing; the rest are common discourse openers seen in real traces and
/// are overridable per run.
pub fn default_markers() -> Vec<String> {
    [
        "wait",
        "alternatively",
        "hmm",
        "but",
        "okay",
        "now",
        "actually",
        "so",
        "therefore",
        "however",
        "note",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Maximal code spans: fenced blocks, inline backtick spans, and indented
/// blocks that immediately follow a blank line. Returned spans are sorted,
/// non-overlapping byte ranges; an unmatched opening fence extends to the
/// end of the text.
pub fn detect_code_spans(trace: &str) -> Vec<(usize, usize)> {
    let mut spans = fenced_spans(trace);
    let mut claimed = spans.clone();
    for span in indent_spans(trace) {
        if !overlaps_any(span, &claimed) {
            spans.push(span);
            claimed.push(span);
        }
    }
    claimed.sort_unstable();
    for span in inline_spans(trace, &claimed) {
        spans.push(span);
    }
    spans.sort_unstable();
    spans
}

fn overlaps_any(span: (usize, usize), others: &[(usize, usize)]) -> bool {
    others.iter().any(|&(s, e)| span.0 < e && s < span.1)
}

fn fenced_spans(trace: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut pos = 0usize;
    while let Some(rel) = trace[pos..].find("```") {
        let open = pos + rel;
        let body_start = open + 3;
        match trace[body_start..].find("```") {
            Some(rel_close) => {
                let end = body_start + rel_close + 3;
                spans.push((open, end));
                pos = end;
            }
            None => {
                spans.push((open, trace.len()));
                break;
            }
        }
    }
    spans
}

fn indent_spans(trace: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut line_start = 0usize;
    let mut prev_blank = true; // treat start of text as not-a-blank-line
    let mut first = true;
    let mut run: Option<(usize, usize)> = None;
    let bytes = trace.as_bytes();
    let mut i = 0usize;
    while line_start < trace.len() {
        // Find end of line (inclusive of the newline).
        let mut line_end = line_start;
        while line_end < bytes.len() && bytes[line_end] != b'\n' {
            line_end += 1;
        }
        if line_end < bytes.len() {
            line_end += 1;
        }
        let line = &trace[line_start..line_end];
        let blank = line.trim().is_empty();
        let indented = line.len() >= 4 && line.as_bytes()[..4] == *b"    " && !blank;
        match (&mut run, indented) {
            (Some(r), true) => r.1 = line_end,
            (Some(_), false) => {
                spans.push(run.take().unwrap());
            }
            (None, true) if prev_blank && !first => {
                run = Some((line_start, line_end));
            }
            _ => {}
        }
        prev_blank = blank;
        first = false;
        line_start = line_end;
        i += 1;
        debug_assert!(i <= trace.len() + 1);
    }
    if let Some(r) = run {
        spans.push(r);
    }
    spans
}

fn inline_spans(trace: &str, claimed: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut gaps = Vec::new();
    let mut cursor = 0usize;
    for &(s, e) in claimed {
        if cursor < s {
            gaps.push((cursor, s));
        }
        cursor = e;
    }
    if cursor < trace.len() {
        gaps.push((cursor, trace.len()));
    }
    for (gs, ge) in gaps {
        let gap = &trace[gs..ge];
        for (line_off, line) in line_offsets(gap) {
            let mut search = 0usize;
            loop {
                let Some(a) = line[search..].find('`') else { break };
                let a = search + a;
                let Some(b) = line[a + 1..].find('`') else { break };
                let b = a + 1 + b;
                spans.push((gs + line_off + a, gs + line_off + b + 1));
                search = b + 1;
            }
        }
    }
    spans
}

fn line_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            out.push((start, &text[start..i]));
            start = i + 1;
        }
    }
    if start <= text.len() {
        out.push((start, &text[start..]));
    }
    out
}

const TERMINATORS: [char; 4] = ['.', '?', '!', ':'];

/// Partition the trace into sentences.
///
/// Outside code spans a sentence ends after a terminator followed by
/// whitespace or at a whitespace run containing a newline; the run itself
/// attaches to the preceding sentence. Each code span is one sentence.
pub fn split_sentences(trace: &str, code_spans: &[(usize, usize)]) -> Vec<Sentence> {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut emit = |start: usize, end: usize, is_code: bool| {
        if start < end {
            sentences.push(Sentence {
                text: trace[start..end].to_string(),
                span: (start, end),
                is_code,
            });
        }
    };
    let mut cursor = 0usize;
    for &(cs, ce) in code_spans {
        split_gap(trace, cursor, cs, &mut emit);
        emit(cs, ce, true);
        cursor = ce;
    }
    split_gap(trace, cursor, trace.len(), &mut emit);

    // Whitespace-only sentences merge into their predecessor (or successor
    // at the very start) so that no standalone blank units survive.
    let mut merged: Vec<Sentence> = Vec::new();
    for sentence in sentences {
        if sentence.text.chars().all(char::is_whitespace) {
            if let Some(prev) = merged.last_mut() {
                prev.text.push_str(&sentence.text);
                prev.span.1 = sentence.span.1;
                continue;
            }
        }
        if let Some(prev) = merged.last_mut() {
            if prev.text.chars().all(char::is_whitespace) && !prev.is_code {
                // Leading whitespace block: prepend to the first real sentence.
                prev.text.push_str(&sentence.text);
                prev.span.1 = sentence.span.1;
                prev.is_code = sentence.is_code;
                continue;
            }
        }
        merged.push(sentence);
    }
    merged
}

fn split_gap(trace: &str, start: usize, end: usize, emit: &mut impl FnMut(usize, usize, bool)) {
    if start >= end {
        return;
    }
    let gap = &trace[start..end];
    let mut sentence_start = 0usize;
    let mut iter = gap.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if TERMINATORS.contains(&c) {
            if matches!(iter.peek(), Some((_, next)) if next.is_whitespace()) {
                let run_end = whitespace_run_end(gap, i + c.len_utf8());
                emit(start + sentence_start, start + run_end, false);
                sentence_start = run_end;
                skip_to(&mut iter, run_end);
            }
        } else if c.is_whitespace() {
            let run_end = whitespace_run_end(gap, i);
            let run_has_newline = gap[i..run_end].contains('\n');
            if run_has_newline {
                emit(start + sentence_start, start + run_end, false);
                sentence_start = run_end;
            }
            skip_to(&mut iter, run_end);
        }
    }
    emit(start + sentence_start, end, false);
}

fn whitespace_run_end(text: &str, from: usize) -> usize {
    let mut end = from;
    for (i, c) in text[from..].char_indices() {
        if c.is_whitespace() {
            end = from + i + c.len_utf8();
        } else {
            break;
        }
    }
    end
}

fn skip_to(iter: &mut std::iter::Peekable<std::str::CharIndices<'_>>, target: usize) {
    while matches!(iter.peek(), Some(&(i, _)) if i < target) {
        iter.next();
    }
}

/// First word of a sentence, lowercased and stripped of punctuation.
fn first_word(text: &str) -> Option<String> {
    let start = text.find(|c: char| c.is_alphanumeric())?;
    let rest = &text[start..];
    let end = rest
        .find(|c: char| !c.is_alphanumeric())
        .unwrap_or(rest.len());
    Some(rest[..end].to_lowercase())
}

/// Greedy single pass merging sentences into segments.
pub fn segment(trace: &str, config: &SegmentConfig) -> Vec<Segment> {
    assert!(
        config.min_chars < config.max_chars,
        "min_chars must be below max_chars"
    );
    let code_spans = detect_code_spans(trace);
    let sentences = split_sentences(trace, &code_spans);
    segment_sentences(&sentences, config)
}

/// Merge pre-split sentences; exposed so callers can reuse the sentence
/// pass for feature extraction.
pub fn segment_sentences(sentences: &[Sentence], config: &SegmentConfig) -> Vec<Segment> {
    struct Building {
        first_sentence: usize,
        start: usize,
        end: usize,
        chars: usize,
        count: usize,
        marker: Option<String>,
    }
    let mut built: Vec<Building> = Vec::new();
    let mut current: Option<Building> = None;
    for (i, sentence) in sentences.iter().enumerate() {
        let sentence_chars = sentence.text.chars().count();
        let boundary = match &current {
            None => None,
            Some(cur) => {
                // A code span must stay with an introducing sentence that
                // ends with ':'.
                let glued_to_intro = sentence.is_code
                    && i > 0
                    && sentences[i - 1].text.trim_end().ends_with(':');
                if glued_to_intro {
                    None
                } else if let Some(word) = first_word(&sentence.text) {
                    if config.markers.iter().any(|m| *m == word) {
                        Some(Some(word))
                    } else if cur.chars >= config.min_chars
                        && cur.chars + sentence_chars > config.max_chars
                    {
                        Some(None)
                    } else {
                        None
                    }
                } else if cur.chars >= config.min_chars
                    && cur.chars + sentence_chars > config.max_chars
                {
                    Some(None)
                } else {
                    None
                }
            }
        };
        match (&mut current, boundary) {
            (Some(cur), Some(marker)) => {
                built.push(std::mem::replace(
                    cur,
                    Building {
                        first_sentence: i,
                        start: sentence.span.0,
                        end: sentence.span.1,
                        chars: sentence_chars,
                        count: 1,
                        marker,
                    },
                ));
            }
            (Some(cur), None) => {
                cur.end = sentence.span.1;
                cur.chars += sentence_chars;
                cur.count += 1;
            }
            (None, _) => {
                current = Some(Building {
                    first_sentence: i,
                    start: sentence.span.0,
                    end: sentence.span.1,
                    chars: sentence_chars,
                    count: 1,
                    marker: first_word(&sentence.text)
                        .filter(|w| config.markers.iter().any(|m| m == w)),
                });
            }
        }
    }
    if let Some(cur) = current {
        built.push(cur);
    }
    // A final short segment folds back into its predecessor.
    if built.len() > 1 && built.last().map(|b| b.chars < config.min_chars) == Some(true) {
        let tail = built.pop().unwrap();
        let prev = built.last_mut().unwrap();
        prev.end = tail.end;
        prev.chars += tail.chars;
        prev.count += tail.count;
    }
    built
        .into_iter()
        .enumerate()
        .map(|(index, b)| Segment {
            index,
            text: sentences[b.first_sentence..b.first_sentence + b.count]
                .iter()
                .map(|s| s.text.as_str())
                .collect(),
            span: (b.start, b.end),
            sentence_count: b.count,
            starts_with_marker: b.marker,
        })
        .collect()
}
