//! Graded purchase reward for shopping tasks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::retrieval::tokenize;

/// What the shopper asked for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShoppingQuery {
    pub attributes: BTreeSet<String>,
    pub options: BTreeSet<String>,
    pub price_cap: f64,
}

/// What was bought.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PurchaseOutcome {
    pub attributes: BTreeSet<String>,
    pub options: BTreeSet<String>,
    pub price: f64,
    /// Title overlap between the bought and the wanted product, in [0, 1].
    pub text_match: f64,
}

/// Title-match multiplier.
pub fn type_reward(text_match: f64) -> f64 {
    if text_match == 0.0 {
        0.0
    } else if text_match < 0.1 {
        0.1
    } else if text_match <= 0.2 {
        0.5
    } else {
        1.0
    }
}

pub fn webshop_reward(query: &ShoppingQuery, outcome: &PurchaseOutcome) -> f64 {
    let attr_hits = query.attributes.intersection(&outcome.attributes).count();
    let opt_hits = query.options.intersection(&outcome.options).count();
    let price_ok = usize::from(outcome.price <= query.price_cap);
    let total = query.attributes.len() + query.options.len() + 1;
    (attr_hits + opt_hits + price_ok) as f64 / total as f64 * type_reward(outcome.text_match)
}

/// Plain token-overlap stand-in for the noun-based title match: the share of
/// distinct target-title tokens that also occur in the selected title. It
/// does no part-of-speech filtering, so function words count too.
pub fn token_overlap_text_match(selected_title: &str, target_title: &str) -> f64 {
    let target: BTreeSet<String> = tokenize(target_title).collect();
    if target.is_empty() {
        return 0.0;
    }
    let selected: BTreeSet<String> = tokenize(selected_title).collect();
    target.intersection(&selected).count() as f64 / target.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| (*s).to_owned()).collect()
    }

    #[test]
    fn type_reward_branches() {
        assert_eq!(type_reward(0.0), 0.0);
        assert_eq!(type_reward(0.05), 0.1);
        assert_eq!(type_reward(0.1), 0.5);
        assert_eq!(type_reward(0.2), 0.5);
        assert_eq!(type_reward(0.21), 1.0);
    }

    #[test]
    fn partial_match_example() {
        let q = ShoppingQuery {
            attributes: set(&["waterproof", "lightweight"]),
            options: set(&["blue"]),
            price_cap: 50.0,
        };
        let o = PurchaseOutcome {
            attributes: set(&["waterproof"]),
            options: set(&["red"]),
            price: 70.0,
            text_match: 0.3,
        };
        // (1 + 0 + 0) / (2 + 1 + 1)
        assert!((webshop_reward(&q, &o) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn overlap_fallback() {
        assert_eq!(token_overlap_text_match("Blue Running Shoe", "blue running shoes"), 2.0 / 3.0);
        assert_eq!(token_overlap_text_match("anything", ""), 0.0);
    }

    fn names() -> impl Strategy<Value = BTreeSet<String>> {
        prop::collection::btree_set("[a-e]", 0..5)
    }

    proptest! {
        #[test]
        fn reward_is_bounded(ua in names(), ya in names(), uo in names(), yo in names(),
                             cap in 0.0f64..100.0, price in 0.0f64..100.0, tm in 0.0f64..=1.0) {
            let r = webshop_reward(
                &ShoppingQuery { attributes: ua, options: uo, price_cap: cap },
                &PurchaseOutcome { attributes: ya, options: yo, price, text_match: tm },
            );
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn reward_is_monotone_in_matches(ua in names(), ya in names(), uo in names(), yo in names(),
                                         extra in "[a-e]", cap in 0.0f64..100.0, price in 0.0f64..100.0,
                                         tm in 0.0f64..=1.0) {
            let q = ShoppingQuery { attributes: ua, options: uo, price_cap: cap };
            let base = PurchaseOutcome { attributes: ya, options: yo, price, text_match: tm };
            let r0 = webshop_reward(&q, &base);
            let mut more_attrs = base.clone();
            more_attrs.attributes.insert(extra.clone());
            let mut more_opts = base.clone();
            more_opts.options.insert(extra);
            let mut cheaper = base.clone();
            cheaper.price = 0.0;
            prop_assert!(webshop_reward(&q, &more_attrs) >= r0);
            prop_assert!(webshop_reward(&q, &more_opts) >= r0);
            prop_assert!(webshop_reward(&q, &cheaper) >= r0);
        }
    }
}
