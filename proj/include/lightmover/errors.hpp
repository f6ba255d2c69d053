#pragma once

#include <stdexcept>
#include <string>

namespace lightmover {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Sample generation hit a configuration that can be redrawn with another seed.
struct RetriableSampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointVersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lightmover
