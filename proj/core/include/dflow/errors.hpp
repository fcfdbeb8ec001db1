#pragma once

#include <stdexcept>
#include <string>

namespace dflow {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonInvertibleScale : public Error { public: using Error::Error; };
class LengthMismatch     : public Error { public: using Error::Error; };
class ShapeMismatch      : public Error { public: using Error::Error; };
class InvalidTemperature : public Error { public: using Error::Error; };
class NonScalarLoss      : public Error { public: using Error::Error; };
class SymbolOutOfRange   : public Error { public: using Error::Error; };
class DivergedLoss       : public Error { public: using Error::Error; };
class IoFailure          : public Error { public: using Error::Error; };
class ManifestMismatch   : public Error { public: using Error::Error; };
class VersionMismatch    : public Error { public: using Error::Error; };
class TooLarge           : public Error { public: using Error::Error; };
class NotNormalized      : public Error { public: using Error::Error; };
class EmptyCorpus        : public Error { public: using Error::Error; };
class ConfigError        : public Error { public: using Error::Error; };

} // namespace dflow
