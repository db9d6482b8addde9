#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace acfleet {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Evaporator temperature left the band where the vapor-pressure fit holds;
// in practice this means the integration blew up.
class ModelDivergence : public Error {
  public:
    using Error::Error;
};

class IntegrationFailure : public Error {
  public:
    using Error::Error;
};

class NeverOffError : public Error {
  public:
    using Error::Error;
};

class NeverOnError : public Error {
  public:
    using Error::Error;
};

class ConvergenceTimeout : public Error {
  public:
    using Error::Error;
};

class InsufficientData : public Error {
  public:
    using Error::Error;
};

class UndefinedNormalization : public Error {
  public:
    using Error::Error;
};

class AccountingError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class ProtocolError : public Error {
  public:
    using Error::Error;
};

class IngestionError : public Error {
  public:
    IngestionError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

// Physics failure tagged with the house that produced it.
class HouseFailure : public Error {
  public:
    HouseFailure(std::string house_id, double sim_time, const std::string& what)
        : Error("house " + house_id + " at t=" + std::to_string(sim_time) + "s: " + what),
          house_id_(std::move(house_id)), sim_time_(sim_time) {}

    const std::string& house_id() const noexcept { return house_id_; }
    double sim_time() const noexcept { return sim_time_; }

  private:
    std::string house_id_;
    double sim_time_;
};

} // namespace acfleet
