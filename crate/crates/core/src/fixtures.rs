//! Small hand-made knowledge base and documents used by tests, the
//! gradient-check command and documentation examples.
//!
//! Embedding axes are loosely "cricket, geography, rugby, other".

use std::path::Path;

use crate::corpus::{parse_corpus, Document};
use crate::kb::{EmbeddingStore, MentionDictionary};

pub const EMBEDDINGS: &str = "\
# d=4 toy space
d 4
e England_cricket_team 0.9 0.3 0.0 0.1
e England 0.1 0.95 0.0 0.2
e Essex_County_Cricket_Club 0.85 0.35 0.0 0.1
e Essex 0.05 0.9 0.1 0.3
e Nasser_Hussain 0.9 0.1 0.1 0.2
e Nasser_Hussain_(rugby) 0.1 0.1 0.95 0.1
s england#cricket England_cricket_team 0.8 0.4 0.05 0.1
s essex#club Essex_County_Cricket_Club 0.8 0.3 0.1 0.2
w Hussain 0.5 0.1 0.5 0.1
w England 0.5 0.6 0.0 0.1
w Essex 0.45 0.6 0.05 0.2
w surplus 0.0 0.1 0.1 0.9
w requirements 0.1 0.1 0.0 0.8
w struck 0.6 0.0 0.2 0.3
w century 0.7 0.1 0.1 0.2
w championship 0.6 0.1 0.4 0.2
w reached 0.1 0.2 0.1 0.7
w innings 0.9 0.0 0.0 0.1
";

pub const DICTIONARY: &str = "\
m Hussain Nasser_Hussain 0.7
m Hussain Nasser_Hussain_(rugby) 0.3
m England England 0.6
m England England_cricket_team 0.4
m Essex Essex_County_Cricket_Club 0.55
m Essex Essex 0.45
";

pub const CORPUS: &str = "\
doc cricket
text Hussain , considered surplus to England 's one-day requirements , struck 158 , his first championship century of the season , as Essex reached 372 and took a first innings lead of 82 .
mention 0 1 Nasser_Hussain
mention 5 6 England_cricket_team
mention 22 23 Essex_County_Cricket_Club

doc pair
text Hussain struck a century for England
mention 0 1 Nasser_Hussain
mention 5 6 England_cricket_team
";

pub fn store() -> EmbeddingStore {
    EmbeddingStore::parse(EMBEDDINGS, Path::new("<fixture>")).expect("fixture embeddings parse")
}

pub fn dictionary() -> MentionDictionary {
    MentionDictionary::parse(DICTIONARY, Path::new("<fixture>")).expect("fixture dictionary parses")
}

pub fn documents() -> Vec<Document> {
    parse_corpus(CORPUS, Path::new("<fixture>")).expect("fixture corpus parses")
}

/// Three mentions: Hussain, England, Essex.
pub fn three_mention_doc() -> Document {
    documents().remove(0)
}

/// Two mentions: Hussain, England.
pub fn two_mention_doc() -> Document {
    documents().remove(1)
}
