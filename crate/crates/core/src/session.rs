//! Conversation state carried across turns.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::executor::ActionRecord;
use crate::trace::TurnTrace;
use crate::translation::LanguageTag;

/// A user-supplied or task-produced file kept in the data pipe. Only this
/// descriptor reaches prompts, never the bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataItem {
    pub reference: String,
    /// Coarse modality: image, audio, video, text or file.
    pub kind: String,
    pub media_type: String,
    #[serde(default)]
    pub caption: String,
}

impl MetadataItem {
    pub fn kind_for_media_type(media_type: &str) -> &'static str {
        match media_type.split('/').next().unwrap_or("") {
            "image" => "image",
            "audio" => "audio",
            "video" => "video",
            "text" => "text",
            _ => "file",
        }
    }

    /// One-line descriptor for the MetaData prompt section.
    pub fn descriptor(&self) -> String {
        if self.caption.is_empty() {
            format!("{} file {}", self.kind, self.reference)
        } else {
            format!("{} file {} ({})", self.kind, self.reference, self.caption)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub turn_id: u64,
    /// Query as the user typed it.
    pub query: String,
    /// Query in the planning language.
    pub query_en: String,
    /// Answer as delivered to the user.
    pub answer: String,
    /// Answer in the planning language.
    pub answer_en: String,
    pub language: LanguageTag,
    pub tasks_used: Vec<String>,
    pub trace: TurnTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Uuid,
    pub language: LanguageTag,
    pub history: Vec<ConversationTurn>,
    pub previous_actions: Vec<ActionRecord>,
    pub metadata_items: Vec<MetadataItem>,
}

impl Session {
    pub fn new(session_id: Uuid) -> Self {
        Self {
            session_id,
            language: LanguageTag::english(),
            history: Vec::new(),
            previous_actions: Vec::new(),
            metadata_items: Vec::new(),
        }
    }

    pub fn next_turn_id(&self) -> u64 {
        self.history.last().map_or(1, |t| t.turn_id + 1)
    }

    pub fn turn(&self, turn_id: u64) -> Option<&ConversationTurn> {
        self.history.iter().find(|t| t.turn_id == turn_id)
    }

    /// History section shared by planner and responder prompts. Stored in
    /// the planning language.
    pub fn history_text(&self) -> String {
        self.history
            .iter()
            .map(|t| format!("USER: {}\nCHA: {}", t.query_en, t.answer_en))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn add_metadata(&mut self, item: MetadataItem) {
        if !self
            .metadata_items
            .iter()
            .any(|m| m.reference == item.reference)
        {
            self.metadata_items.push(item);
        }
    }
}

pub fn metadata_text(items: &[MetadataItem]) -> String {
    items
        .iter()
        .map(MetadataItem::descriptor)
        .collect::<Vec<_>>()
        .join("\n")
}
