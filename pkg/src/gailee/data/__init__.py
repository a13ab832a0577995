from .bio import (
    LABELING_SCHEMAS,
    TRIGGER,
    TRIGGERS_AND_ENTITIES,
    TRIGGERS_ONLY,
    bio_decode,
    bio_encode,
    bio_label_set,
    encode_spans,
)
from .corpus import (
    Argument,
    Corpus,
    Dep,
    Entity,
    Event,
    Sentence,
    Token,
    Vocab,
    build_vocab,
    load_corpus,
    load_embeddings,
    save_corpus,
    save_embeddings,
    validate_sentence,
)
from .schema import NONE, EventSchema, default_schema, load_schema, save_schema
from .synthetic import (
    SyntheticGrammar,
    default_grammar,
    generate_synthetic_corpus,
    load_grammar,
    role_violations,
    synthetic_embeddings,
)
