//! The system instruction that opens every session.
//!
//! It names the available knowledge graphs, lays out the stepwise
//! method, and states the query rules. The rules block is reused
//! verbatim by the answer review pass so both conversations judge by
//! the same standard.

/// Rules the model must follow when building queries.
pub const QUERY_RULES: &str = "\
Rules:
- Always find the IRIs of entities and properties with the search functions before using them in a query. Never invent or guess an IRI.
- Verify the final query by executing it and checking the result before calling answer.
- Prefer SELECT DISTINCT unless duplicates are meaningful.
- Keep queries as simple as the question allows.
- The answer must name the knowledge graph the final query runs over.
- If the question cannot be answered with the available graphs and functions, call cancel and pass the closest query you found as the best attempt.";

/// Build the system instruction for a session over the given graphs,
/// each a `(name, endpoint)` pair. Every graph is listed exactly once.
pub fn build_instruction(graphs: &[(String, String)]) -> String {
    let mut text = String::from(
        "You answer natural language questions by writing and executing SPARQL queries \
         with the provided functions.\n\nKnowledge graphs:\n",
    );
    for (name, endpoint) in graphs {
        text.push_str(&format!("- {name}: SPARQL endpoint at {endpoint}\n"));
    }
    text.push_str(
        "\nMethod:\n\
         1. Break the question into the entities, properties, and constraints it mentions.\n\
         2. Find the IRI of each with the search functions; inspect unfamiliar ones with list.\n\
         3. Build the query in steps, executing intermediate versions to check each part.\n\
         4. Execute the final query, check the result answers the question, then call answer.\n\n\
         Think before each function call about what you expect from it, and after each result \
         about what it tells you and what to do next.\n\n",
    );
    text.push_str(QUERY_RULES);
    text
}

/// Opening line of the user turn that states the task.
pub fn task_message(question: &str, kg: Option<&str>) -> String {
    let mut text =
        String::from("Task: answer the following question with a SPARQL query.\n");
    if let Some(kg) = kg {
        text.push_str(&format!("Knowledge graph: {kg}\n"));
    }
    text.push_str(&format!("Question: {question}"));
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_every_graph_exactly_once() {
        let graphs = vec![
            ("dblp".to_string(), "http://localhost:1/sparql".to_string()),
            ("wikidata".to_string(), "http://localhost:2/sparql".to_string()),
        ];
        let text = build_instruction(&graphs);
        assert_eq!(text.matches("dblp").count(), 1);
        assert_eq!(text.matches("http://localhost:1/sparql").count(), 1);
        assert_eq!(text.matches("wikidata").count(), 1);
        assert_eq!(text.matches("http://localhost:2/sparql").count(), 1);
    }

    #[test]
    fn carries_method_thinking_and_rules() {
        let text = build_instruction(&[("g".to_string(), "http://e/sparql".to_string())]);
        assert!(text.contains("Method:"));
        assert!(text.contains("Think before each function call"));
        assert!(text.contains(QUERY_RULES));
        assert!(text.contains("Never invent or guess an IRI"));
    }

    #[test]
    fn task_message_names_graph_only_when_fixed() {
        let with = task_message("Who wrote Faust?", Some("wikidata"));
        assert!(with.starts_with("Task: answer the following question"));
        assert!(with.contains("Knowledge graph: wikidata\n"));
        assert!(with.ends_with("Question: Who wrote Faust?"));
        let without = task_message("Who wrote Faust?", None);
        assert!(!without.contains("Knowledge graph:"));
    }
}
