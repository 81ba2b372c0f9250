#pragma once

#include <stdexcept>
#include <string>

namespace chainhoi {

// Base for all library errors. Subclasses mirror the failure categories the
// operations can signal so callers can catch precisely.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define CHAINHOI_DEFINE_ERROR(Name)                                  \
    struct Name : Error {                                            \
        explicit Name(const std::string& msg) : Error(msg) {}        \
    }

CHAINHOI_DEFINE_ERROR(ShapeError);
CHAINHOI_DEFINE_ERROR(ConfigError);
CHAINHOI_DEFINE_ERROR(DataError);
CHAINHOI_DEFINE_ERROR(InvalidMotion);
CHAINHOI_DEFINE_ERROR(TooShort);
CHAINHOI_DEFINE_ERROR(InvalidSequence);
CHAINHOI_DEFINE_ERROR(InvalidSpec);
CHAINHOI_DEFINE_ERROR(InvalidChains);
CHAINHOI_DEFINE_ERROR(MaskError);
CHAINHOI_DEFINE_ERROR(TimestepError);
CHAINHOI_DEFINE_ERROR(StepOrderError);
CHAINHOI_DEFINE_ERROR(EmptyMesh);
CHAINHOI_DEFINE_ERROR(DegenerateMesh);
CHAINHOI_DEFINE_ERROR(NotWatertight);
CHAINHOI_DEFINE_ERROR(VocabError);
CHAINHOI_DEFINE_ERROR(PoolError);
CHAINHOI_DEFINE_ERROR(EmptyGroup);
CHAINHOI_DEFINE_ERROR(InvalidFeatures);
CHAINHOI_DEFINE_ERROR(ScenarioError);
CHAINHOI_DEFINE_ERROR(DatasetError);
CHAINHOI_DEFINE_ERROR(NumericError);

#undef CHAINHOI_DEFINE_ERROR

}  // namespace chainhoi
