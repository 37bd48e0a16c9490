//! The judge rubric prompt and per-sample request construction.

use crate::corpus::Sample;

/// The five-dimension scoring rubric sent to the judge, with `{s}` as the
/// placeholder for the serialized sample. Wording, including irregular
/// dashes and spellings, follows the rubric text exactly.
pub const RUBRIC_TEMPLATE: &str = r#"You are evaluating the quality of a single data sample from medical datasets, including three types: visual question answering, captioning, and case reporting. Rate the sample on a scale of 1 to 5 for each of the following five dimensions, and provide a clear explanation for your score. Your response must be in a valid JSON format, strictly following the structure below.

Evaluation Dimensions and Guidelines

1. Medical Information Accuracy: Definition: How medically accurate and clinically appropriate is the information in this sample? Evaluate whether the diagnosis, symptoms, treatment, terminology, and reasoning are factually correct and aligned with standard medical knowledge.

1 – Contains serious factual errors or misinformation; could lead to harm.
2 – Includes noticeable inaccuracies or misconceptions; questionable clinical logic.
3 – Mostly accurate, but includes some outdated, vague, or imprecise information.
4 - Clinically sound and reliable, with only minor wording or factual issues.
5 - Fully medically accurate, consistent with guidelines and expert-level clarity.

2. Language Clarity and Fluency: Definition: How well is the information communicated in natural, readable, and professional language? Assess grammar, clarity, flow, and appropriateness for medical or patient-facing communication.

1 – Unclear or disorganized; major grammar issues that hinder understanding.
2 – Awkward, ambiguous, or frequently incorrect language.
3 – Understandable but with some unnatural phrasing or awkward sentence structure.
4 – Clear and coherent; only minor language flaws.
5 – Highly fluent, polished, and well-suited for clinical or academic contexts.

3. Caption/Dialogue Completeness: Definition: For multi-turn dialogue, does the exchange include all key components of a meaningful clinical interaction (e.g., symptoms, history, reasoning, advice)? Evaluate whether the conversation flows logically and covers necessary content. For single-turn samples or caption, assess whether the response directly, sufficiently, and contextually addresses the input question or concern.

1 – Severely incomplete or off-topic; the response fails to address the input meaningfully.
2 – Major gaps; the response is only partially relevant or lacks necessary context.
3 – Generally appropriate, but missing some useful clarifications or elaboration.
4 – Mostly complete; clear and contextually suitable with minor detail omissions.
5 – Fully complete and coherent; the response provides an informative and context-aware answer, proportional to the input.

Note: For multi-turn dialogue, completeness includes aspects like logical progression, topic coverage, and closure. For single-turn Q&A, completeness means answering the question clearly, relevantly, and with appropriate medical insight.

4. Medical Imaging Relevance: Definition: If an image is present, does it clearly support or correspond to the associated text? Judge how well the image reinforces or illustrates the medical concepts being discussed.

1 – No image provided, or image is irrelevant/inappropriate. (Assign 1 by default if no image.)
2 – Weak connection; image adds little or may be confusing.
3 – Somewhat related; offers limited value or context.
4 – Relevant and supports the written content effectively.
5 – Strong alignment between image and text; image enhances understanding.

Note: If no image is provided in the sample, write: "No image provided. Assigning a score of 1 by default." and assign score = 1

5. Practicality: Definition: How useful is this data sample for real-world medical applications? Consider utility in model training, clinical decision support, educational value, or real patient interaction systems.

1 – No practical use; irrelevant or flawed content.
2 – Very limited applicability in specialized cases only.
3 – Somewhat useful; suitable for non-critical training or analysis.
4 – Practical and usable with minor improvements.
5 – Highly valuable for real-world use; clinically or technically actionable.

Overall Score Definition: Based on your evaluation across all five dimensions, assign a final overall score that reflects the holistic quality of the data sample. Consider accuracy, clarity, completeness, image relevance (if applicable), and practical usability as a whole. This score is not necessarily the average, but should represent your expert judgment of the sample's real-world value.

1 – Very poor overall; unreliable, misleading, or unusable.
2 – Weak quality; flawed in multiple aspects, limited usability.
3 – Adequate; some issues, but can be useful in certain contexts.
4 – Good quality; mostly solid with minor areas for improvement.
5 – Excellent; reliable, polished, and ready for real-world use or modeling.

The response fomat is:

{"Medical Information Accuracy": {"score": <1-5>, "comment": "<explanation>"}, "Language Clarity and Fluency": {"score": <1-5>, "comment": "<explanation>"}, "Dialogue Completeness": {"score": <1-5>, "comment": "<explanation>"}, "Medical Imaging Relevance": {"score": <1-5>, "comment": "<explanation>"}, "Practicality": {"score": <1-5>, "comment": "<explanation>"}, "Overall": {"score": <1-5>, "comment": "<summary comment>"}}

Here is the sample: {s}"#;

/// Serializes a sample into the block substituted at `{s}`: id, category,
/// one presence marker per image (never the pixels), and every text turn.
pub fn serialize_for_prompt(s: &Sample) -> String {
    let images = if s.images.is_empty() {
        "none".to_string()
    } else {
        (1..=s.images.len())
            .map(|i| format!("[image-{i}]"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut block = format!("id: {}\ncategory: {}\nimages: {}\nturns:", s.id, s.category.key(), images);
    for turn in &s.text_turns {
        let role = match turn.role {
            crate::corpus::Role::Caption => "caption",
            crate::corpus::Role::User => "user",
            crate::corpus::Role::Assistant => "assistant",
            crate::corpus::Role::InterleavedText => "text",
        };
        block.push_str(&format!("\n{role}: {}", turn.content));
    }
    block
}

/// The full judge request for one sample: the rubric with the serialized
/// sample substituted at the `{s}` placeholder.
pub fn build_prompt(s: &Sample) -> String {
    RUBRIC_TEMPLATE.replacen("{s}", &serialize_for_prompt(s), 1)
}
