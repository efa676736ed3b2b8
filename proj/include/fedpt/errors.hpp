#pragma once

#include <stdexcept>
#include <string>

namespace fedpt {

// Base class for all library errors. Specific types exist so callers can
// distinguish recoverable conditions (e.g. ZeroVector in cosine) from bugs.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonSymmetric final : Error { using Error::Error; };
struct NoConvergence final : Error { using Error::Error; };
struct ZeroVector final : Error { using Error::Error; };
struct EmptyInput final : Error { using Error::Error; };
struct DimensionMismatch final : Error { using Error::Error; };
struct ShapeMismatch final : Error { using Error::Error; };
struct EmptyBatch final : Error { using Error::Error; };
struct DimensionTooLarge final : Error { using Error::Error; };
struct DegeneratePair final : Error { using Error::Error; };
struct InvalidK final : Error { using Error::Error; };
struct InvalidParams final : Error { using Error::Error; };
struct TooManyDevices final : Error { using Error::Error; };
struct ZeroTotalSamples final : Error { using Error::Error; };
struct EmptyShard final : Error { using Error::Error; };
struct MissingUpdate final : Error { using Error::Error; };
struct UnknownConfig final : Error { using Error::Error; };
struct ParseError final : Error { using Error::Error; };
struct LabelOutOfRange final : Error { using Error::Error; };
struct ConfigError final : Error { using Error::Error; };

}  // namespace fedpt
