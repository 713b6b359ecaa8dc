#pragma once

#include <stdexcept>
#include <string>

namespace gslt {

// Shape/extent mismatch between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Token or id outside a vocabulary.
struct VocabularyError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// API precondition violated (non-scalar loss, empty input, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Index outside a container or graph node range.
struct BoundsError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Malformed serialized input; carries whatever position info is known.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Serialized input declares a schema version this build does not read.
struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible configuration (protocol vs checkpoint, bad flag combo).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged or aborted; message names the step/batch.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gslt
