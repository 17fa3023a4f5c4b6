//! Bundled mini-corpus: small annotated problems that make every pipeline
//! stage runnable offline, without external benchmarks or toolchains
//! beyond a Python interpreter.
//!
//! The two figure functions `f1`/`f2` are kept verbatim because several
//! tests pin their composed behavior; everything else is deliberately
//! total on arbitrary inputs of its declared input type, so oracle
//! equivalence can be checked on seeded random inputs.

use std::collections::BTreeMap;

use crate::forge::{BaseProblem, Family, OracleMode, OracleSpec};

pub const FIG_SKIP_SPACES_SRC: &str = "def f1(text: str) -> str:\n  i = 0\n  while i < len(text) and text[i].isspace():\n    i+=1\n  if i == len(text):\n    return 'space'\n  return 'no'\n";

pub const FIG_CHAR_SHIFT_FREQ_SRC: &str = "def f2(text: str) -> list[int]:\n  occ = {}\n  for ch in text:\n    n = {'a': 'b', 'b': 'c', 'c': 'd', 'd': 'e'}\n    n = n.get(ch, ch)\n    occ[n] = occ.get(n, 0) + 1\n  return [x for _, x in occ.items()]\n";

fn execution_problem(source: &str, input_literal: &str) -> BaseProblem {
    BaseProblem::new(
        Family::Execution,
        "python",
        source,
        OracleSpec::new(
            OracleMode::LiteralEquality,
            vec![input_literal.to_string()],
            10.0,
        )
        .expect("valid oracle"),
        BTreeMap::new(),
    )
    .expect("bundled execution problem is well-formed")
}

fn fim_problem(source: &str, description: &str, completion: &str, stdin: &str) -> BaseProblem {
    let mut metadata = BTreeMap::new();
    metadata.insert("description".to_string(), description.to_string());
    metadata.insert("reference_completion".to_string(), completion.to_string());
    BaseProblem::new(
        Family::FillInMiddle,
        "python",
        source,
        OracleSpec::new(OracleMode::StdioTests, vec![stdin.to_string()], 10.0)
            .expect("valid oracle"),
        metadata,
    )
    .expect("bundled fill-in-middle problem is well-formed")
}

fn translation_problem(source: &str, stdin: &str) -> BaseProblem {
    let mut metadata = BTreeMap::new();
    metadata.insert("source_language".to_string(), "python".to_string());
    metadata.insert("target_language".to_string(), "python".to_string());
    BaseProblem::new(
        Family::Translation,
        "python",
        source,
        OracleSpec::new(OracleMode::CompileRunCompare, vec![stdin.to_string()], 10.0)
            .expect("valid oracle"),
        metadata,
    )
    .expect("bundled translation problem is well-formed")
}

/// The first figure function: collapses an input string to a label.
pub fn fig_skip_spaces() -> BaseProblem {
    execution_problem(FIG_SKIP_SPACES_SRC, "'     '")
}

/// The second figure function: shifted character frequency counts.
pub fn fig_char_shift_freq() -> BaseProblem {
    execution_problem(FIG_CHAR_SHIFT_FREQ_SRC, "'hello world'")
}

/// Twelve annotated execution functions with a composition-friendly mix of
/// signatures: several `str -> str`, two `str -> list[int]`, list and int
/// transformers, and a dict-returning tail.
pub fn execution_problems() -> Vec<BaseProblem> {
    vec![
        fig_skip_spaces(),
        fig_char_shift_freq(),
        execution_problem(
            "def swap_case(text: str) -> str:\n    return text.swapcase()\n",
            "'Hello World'",
        ),
        execution_problem(
            "def strip_digits(text: str) -> str:\n    return ''.join(ch for ch in text if not ch.isdigit())\n",
            "'a1b2c3'",
        ),
        execution_problem(
            "def reverse_text(text: str) -> str:\n    return text[::-1]\n",
            "'abc def'",
        ),
        execution_problem(
            "def word_lengths(text: str) -> list[int]:\n    return [len(word) for word in text.split()]\n",
            "'the quick brown fox'",
        ),
        execution_problem(
            "def double_each(values: list[int]) -> list[int]:\n    return [v * 2 for v in values]\n",
            "[1, 2, 3]",
        ),
        execution_problem(
            "def prefix_sums(values: list[int]) -> list[int]:\n    total = 0\n    out = []\n    for v in values:\n        total += v\n        out.append(total)\n    return out\n",
            "[1, 2, 3, 4]",
        ),
        execution_problem(
            "def total_sum(values: list[int]) -> int:\n    return sum(values)\n",
            "[5, 7, 9]",
        ),
        execution_problem(
            "def count_even(values: list[int]) -> int:\n    return len([v for v in values if v % 2 == 0])\n",
            "[1, 2, 3, 4, 8]",
        ),
        execution_problem(
            "def to_binary(number: int) -> str:\n    return bin(abs(number))[2:]\n",
            "42",
        ),
        execution_problem(
            "def char_counts(text: str) -> dict[str, int]:\n    counts = {}\n    for ch in text:\n        counts[ch] = counts.get(ch, 0) + 1\n    return counts\n",
            "'abca'",
        ),
    ]
}

/// Blank marker spliced out of fill-in-the-middle sources.
pub const BLANK_MARKER: &str = "<<BLANK>>";

/// Four stdin -> stdout integer transducers, each with one blank. They all
/// read whitespace-separated integers and print integers, so any pipe
/// order is well defined.
pub fn fim_problems() -> Vec<BaseProblem> {
    vec![
        fim_problem(
            "import sys\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    <<BLANK>>\n\nmain()\n",
            "Read whitespace-separated integers from standard input and print their sum.",
            "print(sum(values))",
            "3 1 4 1 5",
        ),
        fim_problem(
            "import sys\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    doubled = <<BLANK>>\n    print(' '.join(str(v) for v in doubled))\n\nmain()\n",
            "Read integers and print each doubled, space-separated on one line.",
            "[v * 2 for v in values]",
            "2 5 7",
        ),
        fim_problem(
            "import sys\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    <<BLANK>>\n    print(' '.join(str(v) for v in ordered))\n\nmain()\n",
            "Read integers and print them in ascending order, space-separated.",
            "ordered = sorted(values)",
            "9 1 8 2",
        ),
        fim_problem(
            "import sys\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    <<BLANK>>\n\nmain()\n",
            "Read integers and print how many are strictly positive.",
            "print(len([v for v in values if v > 0]))",
            "3 -1 0 7 -5",
        ),
    ]
}

/// Four python -> python translation tasks. Each program wraps a pure
/// `transform` over the integer stream, which lets a correct "translation"
/// of a chain be a single merged program.
pub fn translation_problems() -> Vec<BaseProblem> {
    vec![
        translation_problem(
            "import sys\n\ndef transform(values):\n    return [-v for v in values]\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    print(' '.join(str(v) for v in transform(values)))\n\nmain()\n",
            "3 -1 4",
        ),
        translation_problem(
            "import sys\n\ndef transform(values):\n    return [v * v for v in values]\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    print(' '.join(str(v) for v in transform(values)))\n\nmain()\n",
            "2 -3 5",
        ),
        translation_problem(
            "import sys\n\ndef transform(values):\n    return sorted(values, reverse=True)\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    print(' '.join(str(v) for v in transform(values)))\n\nmain()\n",
            "4 9 1 6",
        ),
        translation_problem(
            "import sys\n\ndef transform(values):\n    return [v for v in values if v % 2 == 0]\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n    print(' '.join(str(v) for v in transform(values)))\n\nmain()\n",
            "1 2 3 4 5 6",
        ),
    ]
}

/// The full bundled pool: 20 problems across the three families.
pub fn mini_corpus() -> Vec<BaseProblem> {
    let mut pool = execution_problems();
    pool.extend(fim_problems());
    pool.extend(translation_problems());
    pool
}

/// A sum-check stdio task shaped like classic fill-in-the-middle unit
/// tests: first token is a case count, then triples; prints YES when one
/// number equals the sum of the other two. Kept out of the composition
/// pool because its output tokens are words, not integers.
pub fn sum_check_fim_problem() -> BaseProblem {
    fim_problem(
        "import sys\n\ndef main():\n    data = sys.stdin.read().split()\n    if not data:\n        return\n    t = int(data[0])\n    idx = 1\n    for _ in range(t):\n        if idx + 2 >= len(data) + 1:\n            break\n        a, b, c = int(data[idx]), int(data[idx + 1]), int(data[idx + 2])\n        idx += 3\n        <<BLANK>>\n\nmain()\n",
        "Determine for each test case whether one of the three integers is the sum of the other two; print YES or NO per case.",
        "print('YES' if (a + b == c or a + c == b or b + c == a) else 'NO')",
        "7 1 4 3 2 5 8 9 11 20 0 0 0 20 20 20 4 12 3 15 7 8",
    )
}

/// Reasoning-trace fixture shaped like a step-by-step execution trace:
/// short setup, mental execution with concrete values, a bug note, and a
/// final answer. Used by segmentation and labeling tests.
pub const FIXTURE_TRACE_EXECUTION: &str = "We are given two functions: f1 and f2.\n\nWe are to compute: assert f2(f1('\"Makers of a Statement\"')) == ?\nFirst, let's compute f1('\"Makers of a Statement\"'): s = '\"Makers of a Statement\"' and the replace call removes all double quotes, so s becomes: 'Makers of a Statement'.\nAt col=0 the first character is 'M', which is not in the punctuation set, so the loop condition fails immediately.\nTherefore, we break out of the loop without entering. Then return s[col+count:] which is s[1:] so the value is 'akers of a Statement'.\nNow, we call f2 on the result: f2('akers of a Statement'). In f2: i = 0, and text[0] is 'a', which is not a space, so the condition fails and i stays 0. i == len(text)? 0 equals 20 is false. Return 'no'.\nNote: f1 has an error: the variable name is misspelled. But in this test case, the loop did not run, so the line was never executed.\nTherefore, the error did not manifest. The result of f1 is 'akers of a Statement', and f2 returns 'no'.\nSo the final answer is 'no'.\n";

/// Reasoning-trace fixture shaped like a long translation trace: language
/// mapping chatter, alternatives, hedging, and inline code. Exercises the
/// marker-heavy path of the segmenter.
pub const FIXTURE_TRACE_TRANSLATION: &str = "Okay, so I need to translate this Java code into Fortran.\nLet me start by understanding what the Java code does. The main part seems to be handling a range of integers stored in a sorted set called `left`.\nFor each query, the code takes a range and a winner index, removes covered elements, and records the winner for each removed position.\nWait, the set keeps the winner's own position: after processing, the code adds the winner back so later queries can still see it.\nHmm, so the set tracks the remaining positions that have not been assigned yet.\nAlternatively, maybe we can use a binary search over a sorted array, since Fortran has no built-in tree set.\nAlternatively, since the initial set is 0 to n-1, perhaps a boolean occupancy array would work. But then finding the next element in a range could be slow.\nNow let's sketch the plan:\n\n    do i = 1, n\n        answer(i) = 0\n    end do\n\nSo the initial answers are all zero. For each query we binary search the lower bound, walk forward removing elements, and assign the winner.\nHowever, when the array is empty the removal loop must not run at all; that edge case possibly bites.\nNote that the output format joins all answers without separators, so the final write uses advance='no' in a loop.\nNow, let's test this with a small example: n=3, one query covering the whole range with winner 2, so the answers become 2, 0, 2 and the printed line is \"202\".\nTherefore the final Fortran code should follow this plan.\n";
