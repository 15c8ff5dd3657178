#include "agent/schema.hpp"

#include <stdexcept>

#include "core/hash.hpp"

namespace plab {
namespace {

int lookup(const std::vector<std::string>& vocab, const std::string& name,
           const char* what) {
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == name) return static_cast<int>(i);
  throw std::out_of_range(std::string("unknown ") + what + " token: " + name);
}

void check_id(int id, std::size_t size, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= size)
    throw std::out_of_range(std::string(what) + " id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(size));
}

std::uint64_t hash_vocab(std::uint64_t h, const std::vector<std::string>& vocab) {
  h = fnv1a_u64(h, vocab.size());
  for (const auto& s : vocab) {
    h = fnv1a(h, s);
    h = fnv1a(h, "\x1f", 1);
  }
  return h;
}

}  // namespace

int ActionSchema::verb_id(const std::string& name) const { return lookup(verbs, name, "verb"); }
int ActionSchema::arg_id(const std::string& name) const { return lookup(args, name, "argument"); }
int ActionSchema::rationale_id(const std::string& name) const {
  return lookup(rationale, name, "rationale");
}
int ActionSchema::prompt_id(const std::string& name) const { return lookup(prompt, name, "prompt"); }

void ActionSchema::validate(const AgentOutput& out) const {
  check_id(out.verb, verbs.size(), "verb");
  check_id(out.arg, args.size(), "argument");
  for (int t : out.rationale) check_id(t, rationale.size(), "rationale");
}

std::uint64_t ActionSchema::hash() const {
  std::uint64_t h = kFnvOffset;
  h = hash_vocab(h, verbs);
  h = hash_vocab(h, args);
  h = hash_vocab(h, rationale);
  h = hash_vocab(h, prompt);
  h = fnv1a_u64(h, kRationaleLen);
  return h;
}

ActionSchema base_schema() {
  ActionSchema s;
  s.verbs = {"tap",          "scroll", "open_app", "call",
             "upload_photo", "get_current_time", "no_op"};
  s.args = {"<none>"};
  return s;
}

}  // namespace plab
