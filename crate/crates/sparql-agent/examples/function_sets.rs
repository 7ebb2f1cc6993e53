//! The five function-set configurations and what each offers the model.
//!
//! Every session runs with one of these sets. B is the bare minimum
//! (terminate or execute), S adds index search and triple listing, SE
//! extends search to entity-anchored lookups, and SA/SC swap the two
//! search functions for autocomplete or constrained search. Few-shot
//! mode appends the two example-retrieval functions to any set.
//!
//!     cargo run --example function_sets

use sparql_agent::agent::FunctionSet;

fn main() {
    println!("{:<4} {:<10} functions", "set", "(parsed)");
    for set in FunctionSet::ALL {
        let names: Vec<&str> = set
            .members(false)
            .iter()
            .map(|m| m.wire_name())
            .collect();
        println!("{:<4} {:<10} {}", set.as_str(), "zero-shot", names.join(", "));

        let with_examples: Vec<&str> = set
            .members(true)
            .iter()
            .map(|m| m.wire_name())
            .filter(|n| !names.contains(n))
            .collect();
        println!("{:<4} {:<10} ... plus {}", "", "few-shot", with_examples.join(", "));
    }
}
