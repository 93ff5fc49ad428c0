// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/resource_model.hpp"
#include "lsm/value.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace lsm {

struct ActionResult {
  /// A variable value, or the named returns of a function / create call.
  std::variant<Value, ValueMap> value;
  Metadata meta;
};

struct ActionError {
  std::string code;
  std::string message;
  friend bool operator==(const ActionError&, const ActionError&) = default;
};

class ActionResponse {
 public:
  ActionResponse(ActionResult result) : body_(std::move(result)) {}
  ActionResponse(ActionError error) : body_(std::move(error)) {}

  static ActionResponse error(std::string_view code, std::string message) {
    return ActionError{std::string(code), std::move(message)};
  }

  bool ok() const { return std::holds_alternative<ActionResult>(body_); }
  const ActionResult& result() const { return std::get<ActionResult>(body_); }
  const ActionError& error() const { return std::get<ActionError>(body_); }

 private:
  std::variant<ActionResult, ActionError> body_;
};

/// Canonical JSON: keys sorted, no whitespace, shortest round-trip floats.
///   {"meta":{"cov":[[..],[..],[..]],"nonce":"..","ts":<ns>},"value":..}
///   {"error":{"code":"..","message":".."}}
std::string serialize_envelope(const ActionResponse& response);
std::string serialize_envelope(const Value& value, const Metadata& meta);

/// Canonical JSON text of an arbitrary document.
std::string canonical_json(const nlohmann::json& j);

/// Parses a request body against the parameters it must supply. Missing or
/// mistyped parameters and unknown keys raise ActionException(bad_payload);
/// keys listed in `optional_extras` may be present as text.
ValueMap deserialize_payload(std::string_view bytes, const ParamList& expected,
                             std::initializer_list<std::string_view> optional_extras = {"nonce"});

/// Parses an envelope produced by serialize_envelope. `kind` types the value of
/// a variable envelope; `returns` types the value map of a function envelope.
/// Throws ActionException(bad_payload) on malformed input.
ActionResponse deserialize_response(std::string_view bytes, const std::optional<ValueKind>& kind = std::nullopt,
                                    const ParamList* returns = nullptr);

}  // namespace lsm
