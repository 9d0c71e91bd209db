#pragma once

#include <memory>
#include <vector>

namespace reticgen {

// Walks one trajectory through a forward policy. logits() are unnormalized
// scores for the next token; the caller masks and normalizes them.
class PolicyCursor {
 public:
  virtual ~PolicyCursor() = default;
  virtual std::vector<double> logits() const = 0;
  virtual void advance(int token) = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::unique_ptr<PolicyCursor> start() const = 0;
  virtual double log_z() const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// All-zero logits: uniform over whatever the mask allows.
class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(std::size_t vocab_size) : vocab_size_(vocab_size) {}
  std::unique_ptr<PolicyCursor> start() const override;
  double log_z() const override { return 0.0; }
  std::size_t vocab_size() const override { return vocab_size_; }

 private:
  std::size_t vocab_size_;
};

}  // namespace reticgen
