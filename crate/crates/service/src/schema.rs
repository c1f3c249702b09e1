//! JSON Schemas of every request and response body, served at `/schema`.

use serde_json::{json, Value};

pub const DRAFT: &str = "https://json-schema.org/draft/2020-12/schema";

fn week() -> Value {
    json!({ "type": "string", "pattern": "^[0-9]{4}-W[0-9]{2}$" })
}

fn nullable_number() -> Value {
    json!({ "type": ["number", "null"] })
}

pub fn definitions() -> Value {
    json!({
        "GoalType": { "enum": ["MINUTES", "SKILLS"] },
        "Variant": { "enum": ["NONE", "VALUE_ONLY", "VALUE_PLUS_EXPLANATION"] },
        "Direction": { "enum": ["RAISE", "LOWER", "KEEP"] },
        "Intuition": { "enum": ["INTUITIVE", "COUNTER_INTUITIVE"] },
        "GoalSource": { "enum": ["accepted", "adjusted", "manual", "seeded"] },
        "Period": {
            "type": "object",
            "required": ["first", "last"],
            "properties": { "first": week(), "last": week() },
            "additionalProperties": false
        },
        "GoalCycle": {
            "type": "object",
            "required": ["student_id", "cycle", "goal_type", "target", "achieved", "period", "source"],
            "properties": {
                "student_id": { "type": "string" },
                "cycle": { "type": "integer", "minimum": 1 },
                "goal_type": { "$ref": "#/$defs/GoalType" },
                "target": { "type": "number", "exclusiveMinimum": 0 },
                "achieved": { "type": ["number", "null"], "minimum": 0 },
                "period": { "$ref": "#/$defs/Period" },
                "source": { "$ref": "#/$defs/GoalSource" }
            },
            "additionalProperties": false
        },
        "CitedFeature": {
            "type": "object",
            "required": ["name", "label", "value"],
            "properties": {
                "name": { "type": "string" },
                "label": { "type": "string" },
                "value": { "type": "number" }
            },
            "additionalProperties": false
        },
        "Recommendation": {
            "type": "object",
            "required": ["student_id", "goal_type", "variant", "recommended_value", "direction", "explanation", "cited_features"],
            "properties": {
                "student_id": { "type": "string" },
                "goal_type": { "$ref": "#/$defs/GoalType" },
                "variant": { "$ref": "#/$defs/Variant" },
                "recommended_value": { "type": ["number", "null"], "exclusiveMinimum": 0 },
                "direction": { "oneOf": [{ "$ref": "#/$defs/Direction" }, { "type": "null" }] },
                "explanation": { "type": ["string", "null"] },
                "cited_features": { "type": "array", "items": { "$ref": "#/$defs/CitedFeature" } }
            },
            "additionalProperties": false
        },
        "Forecast": {
            "type": "object",
            "required": ["student_id", "target", "prediction", "model_kind", "week", "target_week"],
            "properties": {
                "student_id": { "type": "string" },
                "target": { "enum": ["minutes", "skills"] },
                "prediction": { "type": "number", "minimum": 0 },
                "model_kind": { "type": "string" },
                "week": week(),
                "target_week": week()
            },
            "additionalProperties": false
        },
        "Signals": {
            "type": "object",
            "required": ["forecast", "current", "recent_trend", "consistency_score", "student_ability", "student_week_difficulty"],
            "properties": {
                "forecast": { "type": "number", "minimum": 0 },
                "current": { "type": "number", "minimum": 0 },
                "recent_trend": nullable_number(),
                "consistency_score": nullable_number(),
                "student_ability": nullable_number(),
                "student_week_difficulty": nullable_number()
            },
            "additionalProperties": false
        },
        "CohortCutoffs": {
            "type": "object",
            "required": ["consistency_median", "consistency_q25"],
            "properties": {
                "consistency_median": { "type": "number" },
                "consistency_q25": { "type": "number" }
            },
            "additionalProperties": false
        },
        "Scenario": {
            "type": "object",
            "required": ["id", "title", "goal_type", "intuition", "student_id", "cycles", "signals", "cohort", "expected_direction"],
            "properties": {
                "id": { "type": "string" },
                "title": { "type": "string" },
                "goal_type": { "$ref": "#/$defs/GoalType" },
                "intuition": { "$ref": "#/$defs/Intuition" },
                "student_id": { "type": "string" },
                "cycles": { "type": "array", "items": { "$ref": "#/$defs/GoalCycle" } },
                "signals": { "$ref": "#/$defs/Signals" },
                "cohort": { "$ref": "#/$defs/CohortCutoffs" },
                "expected_direction": { "$ref": "#/$defs/Direction" }
            },
            "additionalProperties": false
        },
        "ScenarioList": { "type": "array", "items": { "$ref": "#/$defs/Scenario" } },
        "CycleList": { "type": "array", "items": { "$ref": "#/$defs/GoalCycle" } },
        "RecommendationRequest": {
            "type": "object",
            "required": ["student_id", "goal_type", "variant"],
            "properties": {
                "student_id": { "type": "string" },
                "goal_type": { "$ref": "#/$defs/GoalType" },
                "variant": { "$ref": "#/$defs/Variant" }
            }
        },
        "GoalRequest": {
            "type": "object",
            "required": ["student_id", "goal_type", "value", "source"],
            "properties": {
                "student_id": { "type": "string" },
                "goal_type": { "$ref": "#/$defs/GoalType" },
                "value": { "type": "number", "exclusiveMinimum": 0 },
                "source": { "enum": ["accepted", "adjusted", "manual"] }
            }
        },
        "Error": {
            "type": "object",
            "required": ["error"],
            "properties": {
                "error": {
                    "type": "object",
                    "required": ["code", "message"],
                    "properties": { "code": { "type": "string" }, "message": { "type": "string" } }
                }
            }
        }
    })
}

/// The document served at `/schema`: all definitions plus which one each
/// endpoint returns.
pub fn document() -> Value {
    json!({
        "$schema": DRAFT,
        "$defs": definitions(),
        "endpoints": {
            "GET /students/{id}/forecast": { "response": "Forecast" },
            "GET /students/{id}/cycles": { "response": "CycleList" },
            "POST /recommendation": { "request": "RecommendationRequest", "response": "Recommendation" },
            "GET /scenarios": { "response": "ScenarioList" },
            "POST /goals": { "request": "GoalRequest", "response": "GoalCycle" }
        }
    })
}

/// A standalone schema for one definition, resolvable without the network.
pub fn schema_for(name: &str) -> Value {
    json!({ "$schema": DRAFT, "$defs": definitions(), "$ref": format!("#/$defs/{name}") })
}
