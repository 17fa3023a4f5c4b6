//! Task prompt templates, one per (family, level).
//!
//! The texts are fixed verbatim; rendering only substitutes source texts,
//! the designated test input, and language identifiers. Template sets exist
//! because some assistants ship their own L1 translation preamble; sets
//! differ in that single template.

use super::{BaseProblem, Family, ForgeError};

/// Built-in template set identifiers.
pub const TEMPLATE_SET_DEFAULT: &str = "default";
pub const TEMPLATE_SET_DEEPSEEK: &str = "deepseek_r1";

const EXECUTION_L1: &str = "Based on the given Python code, which may contain errors, complete the assert statement with the output when executing the code on the given test case. Do not output any extra information, even if the function is incorrect or incomplete.\n\n{code}\n\nassert f({input}) ==\nReturn the output of the function without any other things";

const EXECUTION_L2: &str = "Based on the given Python code, which may contain errors, complete the assert statement with the output when executing the code on the given test case. Do not output any extra information, even if the function is incorrect or incomplete.\n# f1\n{f1_code}\n# f2\n{f2_code}\nassert f2(f1({input})) ==\nOnly return the output of the function without any other information and assert statement. If the output is a string, enclose it in single quotes.";

const EXECUTION_L3: &str = "Based on the given Python code, which may contain errors, complete the assert statement with the output when executing the code on the given test case. Do not output any extra information, even if the function is incorrect or incomplete.\n# f1\n{f1_code}\n# f2\n{f2_code}\n# f3\n{f3_code}\nassert f3(f2(f1({input}))) ==\nOnly return the output of the function without any other information and assert statement. If the output is a string, enclose it in single quotes.";

const FIM_L1: &str = "You will be given code with missing lines or blocks that you must fill in.\nOutput only the missing code so that the program will run correctly.\nOutput the missing code as plain text, NOT as markdown code.\nDo NOT output the entire program or any additional information.\n\n{code}";

const FIM_L2: &str = "You will be given program1.py and program2.py with missing lines or blocks that you must fill in.\nOutput only the missing code so that \"python3 program1.py | program2.py\" runs correctly.\nOutput the missing code, NOT as markdown code.\nDo NOT output the entire program or explanations or any additional information.\n\n# Output Format\nReturn json with the following structure:\n{\"program1\": \"completion\", \"program2\": \"completion\"}\n\n# program1.py\n{program1}\n\n# program2.py\n{program2}";

const FIM_L3: &str = "You will be given program1.py, program2.py and program3.py with missing lines or blocks that you must fill in.\nOutput only the missing code so that \"python3 program1.py | program2.py | program3.py\" runs correctly.\nOutput the missing code, NOT as markdown code.\nDo NOT output the entire program or explanations or any additional information.\n\n# Output Format\nReturn json with the following structure:\n{\"program1\": \"completion\", \"program2\": \"completion\", \"program3\": \"completion\"}\n\n# program1.py\n{program1}\n\n# program2.py\n{program2}\n\n# program3.py\n{program3}";

const TRANSLATION_L1: &str = "Translate the following code from {source_language} to {target_language}:\n{code}";

const TRANSLATION_L1_DEEPSEEK: &str = "You are an AI programming assistant, utilizing the DeepSeek Coder model, developed by DeepSeek Company, and you only answer questions related to computer science. For politically sensitive questions, security and privacy issues, and other non-computer science questions, you will refuse to answer.\n### Instruction:\nTranslate the following {source_language} code to {target_language}.\n\n{source_language}\n{code}\n\n### Response:";

const TRANSLATION_CHAIN: &str = "You are given a set of {source_language} programs that are meant to be executed in sequence, where the output of each program is used as the input to the next.\n\nTranslate the *entire sequence* into a single {target_language} program that reproduces the same behavior.\n- Only the first block should handle reading input.\n- Only the last block should handle producing output.\n- Intermediate steps should process data *without I/O*.\n- Do not insert any additional print/read statements in the middle.\nEnsure that the final {target_lang} program behaves identically to the original chain when run on the same input.\n{source_code}";

/// Substitute `{key}` placeholders in a single left-to-right pass, so text
/// carried in by one substitution is never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let key = &after[..close];
            for (k, v) in values {
                if *k == key {
                    out.push_str(&rest[..open]);
                    out.push_str(v);
                    rest = &after[close + 1..];
                    continue 'outer;
                }
            }
        }
        // Not a known placeholder: emit the brace literally and move on.
        out.push_str(&rest[..=open]);
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Rename the single top-level function of an execution source for display
/// inside a prompt. Replaces whole-word occurrences of the original name.
pub(crate) fn rename_function(source_text: &str, new_name: &str) -> String {
    let Ok((original, _, _)) = super::sig::top_level_def(source_text) else {
        return source_text.to_string();
    };
    if original == new_name {
        return source_text.to_string();
    }
    let mut out = String::with_capacity(source_text.len());
    let bytes = source_text.as_bytes();
    let mut i = 0;
    while let Some(hit) = source_text[i..].find(&original) {
        let at = i + hit;
        let before_ok = at == 0 || {
            let b = bytes[at - 1];
            !(b.is_ascii_alphanumeric() || b == b'_')
        };
        let end = at + original.len();
        let after_ok = end >= bytes.len() || {
            let b = bytes[end];
            !(b.is_ascii_alphanumeric() || b == b'_')
        };
        out.push_str(&source_text[i..at]);
        if before_ok && after_ok {
            out.push_str(new_name);
        } else {
            out.push_str(&original);
        }
        i = end;
    }
    out.push_str(&source_text[i..]);
    out
}

/// Render the task prompt for a chain of constituent problems.
///
/// `chain` is ordered head-first. Execution sources are renamed to `f`
/// (level 1) or `f1..fn` so the assert line in the template matches the
/// displayed code. Errors with [`ForgeError::UnknownTemplate`] when no
/// template exists for the (family, level, set) combination.
pub fn render_prompt(
    chain: &[&BaseProblem],
    template_set: &str,
) -> Result<String, ForgeError> {
    assert!(!chain.is_empty(), "render_prompt requires a nonempty chain");
    let family = chain[0].family;
    let level = chain.len();
    let unknown = || ForgeError::UnknownTemplate {
        family,
        level,
        template_set: template_set.to_string(),
    };
    if template_set != TEMPLATE_SET_DEFAULT && template_set != TEMPLATE_SET_DEEPSEEK {
        return Err(unknown());
    }
    match family {
        Family::Execution => {
            let input = chain[0]
                .oracle
                .test_inputs
                .first()
                .cloned()
                .unwrap_or_default();
            match level {
                1 => {
                    let code = rename_function(&chain[0].source_text, "f");
                    Ok(fill(EXECUTION_L1, &[("code", &code), ("input", &input)]))
                }
                2 => {
                    let f1 = rename_function(&chain[0].source_text, "f1");
                    let f2 = rename_function(&chain[1].source_text, "f2");
                    Ok(fill(
                        EXECUTION_L2,
                        &[("f1_code", &f1), ("f2_code", &f2), ("input", &input)],
                    ))
                }
                3 => {
                    let f1 = rename_function(&chain[0].source_text, "f1");
                    let f2 = rename_function(&chain[1].source_text, "f2");
                    let f3 = rename_function(&chain[2].source_text, "f3");
                    Ok(fill(
                        EXECUTION_L3,
                        &[
                            ("f1_code", &f1),
                            ("f2_code", &f2),
                            ("f3_code", &f3),
                            ("input", &input),
                        ],
                    ))
                }
                _ => Err(unknown()),
            }
        }
        Family::FillInMiddle => {
            let blocks: Vec<String> = chain.iter().map(|p| p.described_source()).collect();
            match level {
                1 => Ok(fill(FIM_L1, &[("code", &blocks[0])])),
                2 => Ok(fill(
                    FIM_L2,
                    &[("program1", &blocks[0]), ("program2", &blocks[1])],
                )),
                3 => Ok(fill(
                    FIM_L3,
                    &[
                        ("program1", &blocks[0]),
                        ("program2", &blocks[1]),
                        ("program3", &blocks[2]),
                    ],
                )),
                _ => Err(unknown()),
            }
        }
        Family::Translation => {
            let source_language = chain[0].metadata_value("source_language");
            let target_language = chain[0].metadata_value("target_language");
            if level == 1 {
                let template = if template_set == TEMPLATE_SET_DEEPSEEK {
                    TRANSLATION_L1_DEEPSEEK
                } else {
                    TRANSLATION_L1
                };
                Ok(fill(
                    template,
                    &[
                        ("source_language", &source_language),
                        ("target_language", &target_language),
                        ("code", &chain[0].source_text),
                    ],
                ))
            } else {
                let source_code = chain
                    .iter()
                    .map(|p| p.source_text.as_str())
                    .collect::<Vec<_>>()
                    .join("\n\n");
                Ok(fill(
                    TRANSLATION_CHAIN,
                    &[
                        ("source_language", &source_language),
                        ("target_language", &target_language),
                        ("target_lang", &target_language),
                        ("source_code", &source_code),
                    ],
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus;

    fn fig_pair() -> Vec<BaseProblem> {
        vec![corpus::fig_skip_spaces(), corpus::fig_char_shift_freq()]
    }

    #[test]
    fn execution_l2_prompt_has_function_headers_and_assert() {
        let pair = fig_pair();
        let refs: Vec<&BaseProblem> = pair.iter().collect();
        let prompt = render_prompt(&refs, TEMPLATE_SET_DEFAULT).unwrap();
        assert!(prompt.contains("# f1"));
        assert!(prompt.contains("# f2"));
        assert!(prompt.contains("assert f2(f1("));
        assert!(prompt.contains("def f1(text: str) -> str:"));
    }

    #[test]
    fn execution_l1_prompt_asks_for_assert_completion() {
        let pair = fig_pair();
        let prompt = render_prompt(&[&pair[0]], TEMPLATE_SET_DEFAULT).unwrap();
        assert!(prompt.contains("complete the assert statement"));
        assert!(prompt.contains("assert f("));
    }

    #[test]
    fn translation_chain_prompt_pins_io_rules() {
        let problems = corpus::translation_problems();
        let refs: Vec<&BaseProblem> = problems.iter().take(3).collect();
        let prompt = render_prompt(&refs, TEMPLATE_SET_DEFAULT).unwrap();
        assert!(prompt.contains("Only the first block should handle reading input."));
        assert!(prompt.contains("Translate the *entire sequence*"));
    }

    #[test]
    fn fim_l2_prompt_declares_json_output() {
        let problems = corpus::fim_problems();
        let refs: Vec<&BaseProblem> = problems.iter().take(2).collect();
        let prompt = render_prompt(&refs, TEMPLATE_SET_DEFAULT).unwrap();
        assert!(prompt.contains("Return json with the following structure"));
        assert!(prompt.contains("{\"program1\": \"completion\", \"program2\": \"completion\"}"));
    }

    #[test]
    fn unknown_levels_are_rejected() {
        let pair = fig_pair();
        let refs: Vec<&BaseProblem> = vec![&pair[0], &pair[1], &pair[0], &pair[1]];
        let err = render_prompt(&refs, TEMPLATE_SET_DEFAULT).unwrap_err();
        assert!(matches!(err, ForgeError::UnknownTemplate { .. }));
        let err = render_prompt(&refs[..1], "no_such_set").unwrap_err();
        assert!(matches!(err, ForgeError::UnknownTemplate { .. }));
    }

    #[test]
    fn renaming_respects_word_boundaries() {
        let src = "def tot(xs: list[int]) -> int:\n    total = 0\n    for x in xs:\n        total += x\n    return tot_helper(total) if False else total\n";
        let renamed = rename_function(src, "f1");
        assert!(renamed.contains("def f1(xs"));
        assert!(renamed.contains("total = 0"));
        assert!(renamed.contains("tot_helper"));
    }

    #[test]
    fn fill_does_not_rescan_substituted_text() {
        let out = fill("{a} and {b}", &[("a", "{b}"), ("b", "B")]);
        assert_eq!(out, "{b} and B");
    }
}
