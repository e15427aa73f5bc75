#ifndef TINYBIRD_ERROR_H_
#define TINYBIRD_ERROR_H_

#include <stdexcept>
#include <string>

namespace tinybird {

// Every error raised by the library names the module it came from, so that
// front ends can print "error: <module>: <detail>".
class Error : public std::runtime_error {
 public:
  enum class Kind { kConfig, kFraming, kModel, kIo, kValue };

  Error(Kind kind, std::string module, const std::string& detail)
      : std::runtime_error(module + ": " + detail),
        kind_(kind),
        module_(std::move(module)),
        detail_(detail) {}

  Kind kind() const { return kind_; }
  const std::string& module() const { return module_; }
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::string module_;
  std::string detail_;
};

inline Error ConfigError(std::string module, const std::string& detail) {
  return Error(Error::Kind::kConfig, std::move(module), detail);
}
inline Error FramingError(std::string module, const std::string& detail) {
  return Error(Error::Kind::kFraming, std::move(module), detail);
}
inline Error ModelError(const std::string& detail) {
  return Error(Error::Kind::kModel, "tinyml", detail);
}
inline Error IoError(std::string module, const std::string& detail) {
  return Error(Error::Kind::kIo, std::move(module), detail);
}
inline Error ValueError(std::string module, const std::string& detail) {
  return Error(Error::Kind::kValue, std::move(module), detail);
}

}  // namespace tinybird

#endif  // TINYBIRD_ERROR_H_
