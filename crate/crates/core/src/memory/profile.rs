use serde::{Deserialize, Serialize};

use super::context::{Speaker, Turn};
use crate::llm::{
    last_user_text, render_prompt, ChatMessage, ChatProvider, CompletionParams, ProviderError, TemplateId, Vars,
};

const REPAIR_MESSAGE: &str = "Reply in the exact schema: a single JSON object with exactly the keys \"like\", \
\"dislike\" and \"expect\", each an array of strings, and no other text.";

/// Like / dislike / expect facets. Lists are deduplicated case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UserProfile {
    pub like: Vec<String>,
    pub dislike: Vec<String>,
    pub expect: Vec<String>,
}

fn key(s: &str) -> String {
    s.trim().to_lowercase()
}

fn contains_ci(list: &[String], item: &str) -> bool {
    let k = key(item);
    list.iter().any(|x| key(x) == k)
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    let item = item.trim();
    if !item.is_empty() && !contains_ci(list, item) {
        list.push(item.to_string());
    }
}

fn dedup(list: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for s in list {
        push_unique(&mut out, s);
    }
    out
}

impl UserProfile {
    pub fn is_empty(&self) -> bool {
        self.like.is_empty() && self.dislike.is_empty() && self.expect.is_empty()
    }

    /// Records a like; removes any earlier dislike of the same string.
    pub fn add_like(&mut self, item: &str) {
        let k = key(item);
        self.dislike.retain(|x| key(x) != k);
        push_unique(&mut self.like, item);
    }

    /// Records a dislike; removes any earlier like of the same string.
    pub fn add_dislike(&mut self, item: &str) {
        let k = key(item);
        self.like.retain(|x| key(x) != k);
        push_unique(&mut self.dislike, item);
    }

    pub fn add_expect(&mut self, item: &str) {
        push_unique(&mut self.expect, item);
    }

    /// Same profile with every list deduplicated.
    pub fn normalized(&self) -> UserProfile {
        UserProfile { like: dedup(&self.like), dislike: dedup(&self.dislike), expect: dedup(&self.expect) }
    }
}

fn union(existing: &UserProfile, new: &UserProfile) -> UserProfile {
    let mut out = UserProfile {
        like: dedup(&existing.like)
            .into_iter()
            .filter(|x| !contains_ci(&new.dislike, x))
            .collect(),
        dislike: dedup(&existing.dislike)
            .into_iter()
            .filter(|x| !contains_ci(&new.like, x))
            .collect(),
        expect: Vec::new(),
    };
    for x in &new.like {
        push_unique(&mut out.like, x);
    }
    for x in &new.dislike {
        push_unique(&mut out.dislike, x);
    }
    out
}

/// Case-insensitive union where `new` wins conflicts. `expect` is dropped.
pub fn merge_long_term(existing: &UserProfile, new: &UserProfile) -> UserProfile {
    union(existing, new)
}

/// Profile used at tool time: long-term plus short-term, with the
/// short-term `expect`.
pub fn compose_profile(long: &UserProfile, short: &UserProfile) -> UserProfile {
    let mut out = union(long, short);
    out.expect = dedup(&short.expect);
    out
}

/// Renders turns as `Human: ...` / `Assistant: ...` lines.
pub fn render_turns(turns: &[Turn]) -> String {
    turns.iter().map(Turn::render).collect::<Vec<_>>().join("\n")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictProfile {
    like: Vec<String>,
    dislike: Vec<String>,
    expect: Vec<String>,
}

fn parse_profile(reply: &str) -> Option<UserProfile> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    let p: StrictProfile = serde_json::from_str(&reply[start..=end]).ok()?;
    Some(UserProfile { like: p.like, dislike: p.dislike, expect: p.expect }.normalized())
}

/// Outcome of [`extract_profile`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub profile: UserProfile,
    /// Provider calls spent (1 or 2).
    pub calls: usize,
    pub warning: Option<String>,
}

/// Asks the provider for a profile of `segment`, retrying once with a
/// repair message when the reply is not the three-key object.
pub fn extract_profile(
    provider: &dyn ChatProvider,
    item: &str,
    segment: &[Turn],
) -> Result<Extraction, ProviderError> {
    if segment.is_empty() {
        return Ok(Extraction { profile: UserProfile::default(), calls: 0, warning: None });
    }
    let mut vars = Vars::new();
    vars.insert("item".into(), item.to_string());
    vars.insert("conversation".into(), render_turns(segment));
    let prompt = render_prompt(TemplateId::ProfileExtraction, &vars).expect("profile template vars are complete");
    let params = CompletionParams::default();
    let mut messages = vec![ChatMessage::user(prompt)];
    let first = provider.complete(&messages, &params)?;
    if let Some(profile) = parse_profile(&first) {
        return Ok(Extraction { profile, calls: 1, warning: None });
    }
    messages.push(ChatMessage::assistant(first));
    messages.push(ChatMessage::user(REPAIR_MESSAGE));
    let second = provider.complete(&messages, &params)?;
    if let Some(profile) = parse_profile(&second) {
        return Ok(Extraction { profile, calls: 2, warning: None });
    }
    let warning = "profile extraction reply did not match the schema twice; using an empty profile".to_string();
    tracing::warn!(reply = %second, "{warning}");
    Ok(Extraction { profile: UserProfile::default(), calls: 2, warning: Some(warning) })
}

const DISLIKE_CUES: &[&str] = &[
    "i don't like",
    "i do not like",
    "i dont like",
    "i dislike",
    "i hate",
    "i'm not interested in",
    "i am not interested in",
    "not a fan of",
];
const LIKE_CUES: &[&str] = &[
    "i like",
    "i love",
    "i enjoyed",
    "i enjoy",
    "i have played",
    "i've played",
    "i played",
    "i prefer",
    "my history is",
];
const EXPECT_CUES: &[&str] = &["i'm looking for", "i am looking for", "i want", "i need", "recommend me"];

/// Rule-based profile extractor usable as a [`ChatProvider`].
///
/// Reads the `Human:` lines between `<conversation>` markers and applies
/// cue phrases sentence by sentence; later statements win. It is the
/// default profiler and the reference oracle for the memory fold.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordProfiler;

impl KeywordProfiler {
    pub fn profile_of(&self, conversation: &str) -> UserProfile {
        let mut profile = UserProfile::default();
        for line in conversation.lines() {
            let Some(text) = line.strip_prefix("Human:") else { continue };
            for sentence in text.split(['.', '!', '?', ';']) {
                apply_sentence(&mut profile, sentence);
            }
        }
        profile
    }
}

fn apply_sentence(profile: &mut UserProfile, sentence: &str) {
    let lower = sentence.to_lowercase();
    let find = |cues: &[&str]| -> Option<usize> {
        cues.iter().filter_map(|c| lower.find(c).map(|p| p + c.len())).min()
    };
    // dislike cues contain like cues ("i don't like"), so they are checked first
    if let Some(pos) = find(DISLIKE_CUES) {
        for x in split_list(&sentence[pos..]) {
            profile.add_dislike(&x);
        }
    } else if let Some(pos) = find(LIKE_CUES) {
        for x in split_list(&sentence[pos..]) {
            profile.add_like(&x);
        }
    } else if let Some(pos) = find(EXPECT_CUES) {
        let rest = sentence[pos..].trim();
        if !rest.is_empty() {
            profile.add_expect(rest);
        }
    }
}

fn split_list(rest: &str) -> Vec<String> {
    rest.replace(" and ", ",")
        .replace(" or ", ",")
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ChatProvider for KeywordProfiler {
    fn complete(&self, messages: &[ChatMessage], _params: &CompletionParams) -> Result<String, ProviderError> {
        let text = last_user_text(messages);
        let conversation = match (text.find("<conversation>"), text.rfind("</conversation>")) {
            (Some(a), Some(b)) if b > a => &text[a + "<conversation>".len()..b],
            _ => text,
        };
        let p = self.profile_of(conversation);
        Ok(serde_json::json!({"like": p.like, "dislike": p.dislike, "expect": p.expect}).to_string())
    }
}

impl Turn {
    pub fn render(&self) -> String {
        match self.speaker {
            Speaker::User => format!("Human: {}", self.text),
            Speaker::Assistant => format!("Assistant: {}", self.text),
        }
    }
}
