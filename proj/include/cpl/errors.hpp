#pragma once

#include <stdexcept>
#include <string>

namespace cpl {

// Base class for every error the library raises. `module()` names the
// subsystem so the CLI can print module-tagged messages.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}
    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

#define CPL_DEFINE_ERROR(Name, Module)                                          \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(Module, what) {}         \
    }

CPL_DEFINE_ERROR(SchemaError, "config");
CPL_DEFINE_ERROR(ArgumentError, "argument");
CPL_DEFINE_ERROR(IoError, "io");
CPL_DEFINE_ERROR(FormatError, "ingest");
CPL_DEFINE_ERROR(SplitError, "ingest");
CPL_DEFINE_ERROR(FitError, "lawfit");
CPL_DEFINE_ERROR(ShapeError, "regressor");
CPL_DEFINE_ERROR(ScopeError, "regressor");
CPL_DEFINE_ERROR(CheckpointError, "regressor");
CPL_DEFINE_ERROR(SweepError, "select");

#undef CPL_DEFINE_ERROR

}  // namespace cpl
