#include "cavsec/counters.hpp"

#include <sstream>

namespace cavsec {

OpCounts& OpCounts::operator+=(const OpCounts& o) {
  exp += o.exp;
  group_mul += o.group_mul;
  scalar_mul += o.scalar_mul;
  group_inv += o.group_inv;
  scalar_inv += o.scalar_inv;
  hash += o.hash;
  cipher += o.cipher;
  kdf += o.kdf;
  sample += o.sample;
  member_check += o.member_check;
  return *this;
}

OpCounts operator-(const OpCounts& a, const OpCounts& b) {
  OpCounts d;
  d.exp = a.exp - b.exp;
  d.group_mul = a.group_mul - b.group_mul;
  d.scalar_mul = a.scalar_mul - b.scalar_mul;
  d.group_inv = a.group_inv - b.group_inv;
  d.scalar_inv = a.scalar_inv - b.scalar_inv;
  d.hash = a.hash - b.hash;
  d.cipher = a.cipher - b.cipher;
  d.kdf = a.kdf - b.kdf;
  d.sample = a.sample - b.sample;
  d.member_check = a.member_check - b.member_check;
  return d;
}

std::string OpCounts::summary() const {
  std::ostringstream os;
  os << "exp=" << exp << " mul=" << mul() << " (group=" << group_mul << " scalar=" << scalar_mul
     << ") inv=" << group_inv + scalar_inv << " prf=" << prf() << " sym=" << sym()
     << " (cipher=" << cipher << " kdf=" << kdf << ") sample=" << sample
     << " member_check=" << member_check;
  return os.str();
}

namespace counters {
namespace {
thread_local OpCounts t_counts;
thread_local int t_suspend_depth = 0;
}  // namespace

const OpCounts& current() { return t_counts; }
void reset() { t_counts = OpCounts{}; }
OpCounts& tally() { return t_counts; }
bool suspended() { return t_suspend_depth > 0; }

Suspend::Suspend() { ++t_suspend_depth; }
Suspend::~Suspend() { --t_suspend_depth; }

}  // namespace counters
}  // namespace cavsec
