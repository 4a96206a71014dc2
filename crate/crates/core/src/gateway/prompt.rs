//! Role prompts with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. A brace that does not open a
//! `{identifier}` is copied through unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GatewayError, RoleId};

/// Placeholder names a template may reference.
pub const PLACEHOLDERS: &[&str] = &[
    "env_description",
    "few_shot",
    "focus_points",
    "trajectory",
    "reflections",
    "success_trajectory",
    "fail_trajectories",
    "existing_tips",
    "key_information",
    "similar_trajectories",
    "tips",
];

/// Values for a template's placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_owned(), value.into());
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_owned(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolePrompt {
    pub role: RoleId,
    /// Template name, unique within a [`PromptSet`].
    pub name: String,
    pub system_text: String,
    pub user_template: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// System and user text joined, as recorded in traces.
    pub fn combined(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let bytes = template.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&template[start..=i]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&template[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                let end = template[i + 1..]
                    .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                    .map(|off| i + 1 + off);
                match end {
                    Some(end) if end > i + 1 && bytes[end] == b'}' => {
                        out.push(Piece::Text(&template[start..i]));
                        out.push(Piece::Slot(&template[i + 1..end]));
                        i = end + 1;
                        start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&template[start..]));
    out
}

impl RolePrompt {
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = [&self.system_text, &self.user_template]
            .into_iter()
            .flat_map(|t| pieces(t))
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name),
                Piece::Text(_) => None,
            })
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn render(&self, bindings: &Bindings) -> Result<RenderedPrompt, GatewayError> {
        let fill = |template: &str| -> Result<String, GatewayError> {
            let mut out = String::with_capacity(template.len());
            for piece in pieces(template) {
                match piece {
                    Piece::Text(t) => out.push_str(t),
                    Piece::Slot(name) => match bindings.get(name) {
                        Some(value) => out.push_str(value),
                        None => {
                            return Err(GatewayError::UnboundPlaceholder {
                                template: self.name.clone(),
                                placeholder: name.to_owned(),
                            })
                        }
                    },
                }
            }
            Ok(out)
        };
        let rendered = RenderedPrompt {
            system: fill(&self.system_text)?,
            user: fill(&self.user_template)?,
        };
        if rendered.system.trim().is_empty() && rendered.user.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt(self.name.clone()));
        }
        Ok(rendered)
    }
}

/// Every prompt the pipeline uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub focus: RolePrompt,
    pub react: RolePrompt,
    pub reflect: RolePrompt,
    pub tips_compare: RolePrompt,
    pub tips_supplement: RolePrompt,
    pub tips_success: RolePrompt,
    pub tips_align: RolePrompt,
    pub key_info: RolePrompt,
    pub key_info_reflect: RolePrompt,
    pub policy: RolePrompt,
}

fn prompt(role: RoleId, name: &str, system: &str, user: &str, max_tokens: u32) -> RolePrompt {
    RolePrompt {
        role,
        name: name.to_owned(),
        system_text: system.to_owned(),
        user_template: user.to_owned(),
        max_output_tokens: max_tokens,
        temperature: 0.0,
    }
}

const ACTOR_SYSTEM: &str = "You control an agent in a text-based environment. \
Reply with at most one line starting with \"think:\" followed by exactly one action line. \
The action must follow the environment's command syntax.";

const TIPS_SYSTEM: &str = "You turn agent trajectories into short, actionable tips. \
Each tip is one sentence that would help an agent on this task and on similar tasks. \
Answer only with a numbered list.";

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            focus: prompt(
                RoleId::Focus,
                "focus",
                "You study a text-based environment before an agent starts working in it.",
                "Environment description:\n{env_description}\n\n\
                 Worked examples:\n{few_shot}\n\n\
                 Before any task is attempted, list the points an agent should pay attention to \
                 in this environment: where things tend to be, which commands have preconditions, \
                 and which mistakes are easy to make. Answer with a numbered list of short points.",
                512,
            ),
            react: prompt(
                RoleId::ReAct,
                "react",
                ACTOR_SYSTEM,
                "{env_description}\n\n\
                 Worked examples:\n{few_shot}\n\n\
                 Points to keep in mind:\n{focus_points}\n\
                 Notes from your earlier attempts at this task:\n{reflections}\n\n\
                 Current attempt:\n{trajectory}\n\
                 Next:",
                256,
            ),
            reflect: prompt(
                RoleId::Reflect,
                "reflect",
                "You review a failed attempt at a task and write advice for the next attempt.",
                "The attempt below did not complete the task.\n\n{trajectory}\n\
                 In a few sentences, say what went wrong and what to do differently next time. \
                 Be concrete about locations and commands.",
                300,
            ),
            tips_compare: prompt(
                RoleId::Tips,
                "tips_compare",
                TIPS_SYSTEM,
                "A successful attempt at a task:\n{success_trajectory}\n\
                 Failed attempts at the same task:\n{fail_trajectories}\n\
                 Compare the successful attempt with the failed ones. Write tips that would have \
                 prevented the errors in the failed attempts.",
                400,
            ),
            tips_supplement: prompt(
                RoleId::Tips,
                "tips_supplement",
                TIPS_SYSTEM,
                "A successful attempt at a task:\n{success_trajectory}\n\
                 Tips already recorded for this task:\n{existing_tips}\n\
                 Looking only at the successful attempt, write additional tips about what made it \
                 work. Do not repeat the recorded tips.",
                300,
            ),
            tips_success: prompt(
                RoleId::Tips,
                "tips_success",
                TIPS_SYSTEM,
                "A task solved on the first attempt:\n{success_trajectory}\n\
                 Write a few tips capturing what made this attempt succeed that would carry over \
                 to similar tasks.",
                300,
            ),
            tips_align: prompt(
                RoleId::Tips,
                "tips_align",
                TIPS_SYSTEM,
                "These tips were written for a different environment:\n{existing_tips}\n\
                 Target environment:\n{env_description}\n\n\
                 Rewrite the tips so they refer to the target environment's objects, pages and \
                 commands. Keep the same number of tips or fewer.",
                400,
            ),
            key_info: prompt(
                RoleId::Kie,
                "key_information",
                "You summarize the state of an agent's ongoing attempt after something unexpected \
                 happened.",
                "{trajectory}\n\
                 Extract the key information under these headers:\n\
                 State: where the agent is and what it has observed\n\
                 Inventory: what the agent is holding\n\
                 Completed: subgoals already achieved\n\
                 Pending: subgoals still to do\n\
                 Anomaly: what just went wrong",
                400,
            ),
            key_info_reflect: prompt(
                RoleId::Kir,
                "key_information_reflection",
                "You help an agent recover from a problem by questioning its own situation.",
                "Current attempt:\n{trajectory}\n\
                 Key information:\n{key_information}\n\n\
                 Successful attempts at similar tasks:\n{similar_trajectories}\n\
                 Ask yourself the questions that matter for getting back on track and answer each \
                 one, as lines starting with \"Q:\" and \"A:\". Finish with a line starting with \
                 \"Plan:\" giving the corrected plan.",
                500,
            ),
            policy: prompt(
                RoleId::Policy,
                "policy",
                ACTOR_SYSTEM,
                "{env_description}\n\n\
                 Worked examples:\n{few_shot}\n\n\
                 Tips from similar tasks:\n{tips}\n\
                 Successful attempts at similar tasks:\n{similar_trajectories}\n\
                 Current attempt:\n{trajectory}\n\
                 Next:",
                256,
            ),
        }
    }
}

impl PromptSet {
    pub fn all(&self) -> [&RolePrompt; 10] {
        [
            &self.focus,
            &self.react,
            &self.reflect,
            &self.tips_compare,
            &self.tips_supplement,
            &self.tips_success,
            &self.tips_align,
            &self.key_info,
            &self.key_info_reflect,
            &self.policy,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_escapes() {
        let p = prompt(RoleId::Focus, "t", "sys {{literal}}", "a {tips} b {x-y} {}", 10);
        let r = p.render(&Bindings::new().with("tips", "T")).unwrap();
        assert_eq!(r.system, "sys {literal}");
        assert_eq!(r.user, "a T b {x-y} {}");
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let set = PromptSet::default();
        let err = set
            .reflect
            .render(&Bindings::new().with("tips", "x"))
            .unwrap_err();
        match err {
            GatewayError::UnboundPlaceholder { placeholder, template } => {
                assert_eq!(placeholder, "trajectory");
                assert_eq!(template, "reflect");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_templates_use_known_placeholders() {
        for p in PromptSet::default().all() {
            for name in p.placeholders() {
                assert!(PLACEHOLDERS.contains(&name), "{}: {name}", p.name);
            }
        }
        let react = PromptSet::default().react;
        assert_eq!(
            react.placeholders(),
            ["env_description", "few_shot", "focus_points", "reflections", "trajectory"]
        );
    }

    #[test]
    fn focus_points_precede_reflections_in_react_prompt() {
        let t = &PromptSet::default().react.user_template;
        let order: Vec<_> = ["{env_description}", "{few_shot}", "{focus_points}", "{reflections}", "{trajectory}"]
            .iter()
            .map(|p| t.find(p).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}
