#include "cavsec/group.hpp"

#include <sstream>
#include <stdexcept>

#include "cavsec/counters.hpp"

namespace cavsec {

namespace {

// mpz_probab_prime_p has error at most 4^-reps.
constexpr int kPrimeReps = 40;

bool is_probable_prime(const mpz_class& n) {
  return mpz_probab_prime_p(n.get_mpz_t(), kPrimeReps) > 0;
}

std::size_t bit_length(const mpz_class& v) { return mpz_sizeinbase(v.get_mpz_t(), 2); }

mpz_class powm(const mpz_class& base, const mpz_class& e, const mpz_class& mod) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), base.get_mpz_t(), e.get_mpz_t(), mod.get_mpz_t());
  return r;
}

mpz_class random_bits_top_set(Rng& rng, std::size_t bits) {
  mpz_class top = mpz_class(1) << static_cast<mp_bitcnt_t>(bits - 1);
  return top + rng.below(top);
}

std::string hex_of(const mpz_class& v) { return v.get_str(16); }

}  // namespace

SecurityProfile parse_profile(std::string_view name) {
  if (name == "test") return SecurityProfile::test;
  if (name == "standard") return SecurityProfile::standard;
  throw std::invalid_argument("unknown security profile: " + std::string(name));
}

std::string_view profile_name(SecurityProfile profile) {
  return profile == SecurityProfile::test ? "test" : "standard";
}

// ---------------------------------------------------------------- GroupParams

GroupParams::GroupParams(mpz_class p, mpz_class q, mpz_class g)
    : p_(std::move(p)), q_(std::move(q)), g_(std::move(g)) {
  element_bytes_ = (bit_length(p_) + 7) / 8;
  scalar_bytes_ = (bit_length(q_) + 7) / 8;
}

Group GroupParams::create(mpz_class p, mpz_class q, mpz_class g) {
  if (p < 3 || !is_probable_prime(p)) throw std::invalid_argument("p is not prime");
  if (q < 2 || !is_probable_prime(q)) throw std::invalid_argument("q is not prime");
  if (mpz_divisible_p(mpz_class(p - 1).get_mpz_t(), q.get_mpz_t()) == 0)
    throw std::invalid_argument("q does not divide p - 1");
  if (g < 2 || g > p - 1) throw std::invalid_argument("g outside [2, p-1]");
  if (powm(g, q, p) != 1) throw std::invalid_argument("g does not have order q");
  return Group(new GroupParams(std::move(p), std::move(q), std::move(g)));
}

Group GroupParams::toy() { return create(23, 11, 4); }

Group GroupParams::generate(SecurityProfile profile, std::uint64_t seed) {
  const std::size_t p_bits = profile == SecurityProfile::test ? 512 : 3072;
  const std::size_t q_bits = profile == SecurityProfile::test ? 160 : 256;
  Rng rng(seed);

  mpz_class q;
  do {
    mpz_class start = random_bits_top_set(rng, q_bits);
    mpz_nextprime(q.get_mpz_t(), start.get_mpz_t());
  } while (bit_length(q) != q_bits);

  const mpz_class two_q = 2 * q;
  mpz_class p;
  for (;;) {
    mpz_class x = random_bits_top_set(rng, p_bits);
    p = x - (x % two_q) + 1;
    if (bit_length(p) != p_bits) continue;
    if (is_probable_prime(p)) break;
  }

  const mpz_class cofactor = (p - 1) / q;
  mpz_class g;
  for (mpz_class h = 2;; ++h) {
    g = powm(h, cofactor, p);
    if (g != 1) break;
  }
  return create(p, q, g);
}

std::size_t GroupParams::p_bits() const { return bit_length(p_); }
std::size_t GroupParams::q_bits() const { return bit_length(q_); }

bool GroupParams::contains(const mpz_class& v) const {
  if (v < 1 || v >= p_) return false;
  return powm(v, q_, p_) == 1;
}

std::string GroupParams::to_text() const {
  return "p=" + hex_of(p_) + "\nq=" + hex_of(q_) + "\ng=" + hex_of(g_) + "\n";
}

Group GroupParams::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  mpz_class p, q, g;
  bool have_p = false, have_q = false, have_g = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DecodeError("malformed parameter line: " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    mpz_class v;
    if (v.set_str(val, 16) != 0) throw DecodeError("bad hex value for " + key);
    if (key == "p") {
      p = v;
      have_p = true;
    } else if (key == "q") {
      q = v;
      have_q = true;
    } else if (key == "g") {
      g = v;
      have_g = true;
    } else {
      throw DecodeError("unknown parameter key: " + key);
    }
  }
  if (!have_p || !have_q || !have_g) throw DecodeError("parameter file needs p, q and g");
  return create(p, q, g);
}

bool GroupParams::same_values(const GroupParams& other) const {
  return p_ == other.p_ && q_ == other.q_ && g_ == other.g_;
}

void require_same_group(const Group& a, const Group& b) {
  if (!a || !b) throw ParamsMismatch("operation on an uninitialised value");
  if (a == b) return;
  if (!a->same_values(*b)) throw ParamsMismatch("values belong to different group parameters");
}

Bytes export_fixed(const mpz_class& v, std::size_t width) {
  const std::size_t len = (bit_length(v) + 7) / 8;
  if (v < 0 || len > width) throw std::invalid_argument("value does not fit encoding width");
  Bytes out(width, 0);
  if (v != 0) {
    std::size_t count = 0;
    mpz_export(out.data() + (width - len), &count, 1, 1, 1, 0, v.get_mpz_t());
  }
  return out;
}

mpz_class import_bytes(ByteView data) {
  mpz_class v;
  if (!data.empty()) mpz_import(v.get_mpz_t(), data.size(), 1, 1, 1, 0, data.data());
  return v;
}

// --------------------------------------------------------------------- Scalar

Scalar::Scalar(Group group, mpz_class reduced, int) : group_(std::move(group)), v_(std::move(reduced)) {}

Scalar::Scalar(Group group, long value) : group_(std::move(group)) {
  if (!group_) throw ParamsMismatch("scalar without group");
  v_ = value;
  mpz_mod(v_.get_mpz_t(), v_.get_mpz_t(), group_->q().get_mpz_t());
}

Scalar Scalar::from_integer(Group group, const mpz_class& value) {
  if (!group) throw ParamsMismatch("scalar without group");
  mpz_class r;
  mpz_mod(r.get_mpz_t(), value.get_mpz_t(), group->q().get_mpz_t());
  return Scalar(std::move(group), std::move(r), 0);
}

Scalar Scalar::random(Group group, Rng& rng) {
  mpz_class v = rng.below(group->q());
  return Scalar(std::move(group), std::move(v), 0);
}

Scalar Scalar::random_nonzero(Group group, Rng& rng) {
  mpz_class v = rng.nonzero_below(group->q());
  return Scalar(std::move(group), std::move(v), 0);
}

Scalar Scalar::decode(Group group, ByteView data) {
  if (data.size() != group->scalar_bytes()) throw DecodeError("scalar has wrong width");
  mpz_class v = import_bytes(data);
  if (v >= group->q()) throw DecodeError("scalar out of range");
  return Scalar(std::move(group), std::move(v), 0);
}

Bytes Scalar::encode() const { return export_fixed(v_, group_->scalar_bytes()); }

Scalar Scalar::operator+(const Scalar& o) const {
  require_same_group(group_, o.group_);
  mpz_class r = v_ + o.v_;
  if (r >= group_->q()) r -= group_->q();
  return Scalar(group_, std::move(r), 0);
}

Scalar Scalar::operator-(const Scalar& o) const {
  require_same_group(group_, o.group_);
  mpz_class r = v_ - o.v_;
  if (r < 0) r += group_->q();
  return Scalar(group_, std::move(r), 0);
}

Scalar Scalar::operator-() const {
  if (v_ == 0) return *this;
  return Scalar(group_, group_->q() - v_, 0);
}

Scalar Scalar::operator*(const Scalar& o) const {
  require_same_group(group_, o.group_);
  CAVSEC_COUNT(scalar_mul);
  mpz_class r = v_ * o.v_;
  mpz_mod(r.get_mpz_t(), r.get_mpz_t(), group_->q().get_mpz_t());
  return Scalar(group_, std::move(r), 0);
}

Scalar Scalar::inverse() const {
  if (v_ == 0) throw std::domain_error("inverse of zero scalar");
  CAVSEC_COUNT(scalar_inv);
  mpz_class r;
  mpz_invert(r.get_mpz_t(), v_.get_mpz_t(), group_->q().get_mpz_t());
  return Scalar(group_, std::move(r), 0);
}

bool operator==(const Scalar& a, const Scalar& b) {
  if (!a.group_ || !b.group_) return !a.group_ && !b.group_;
  return a.v_ == b.v_ && (a.group_ == b.group_ || a.group_->same_values(*b.group_));
}

// --------------------------------------------------------------- GroupElement

GroupElement::GroupElement(Group group, mpz_class value) : group_(std::move(group)), v_(std::move(value)) {}

GroupElement GroupElement::identity(Group group) { return GroupElement(std::move(group), 1); }

GroupElement GroupElement::generator(Group group) {
  mpz_class g = group->g();
  return GroupElement(std::move(group), std::move(g));
}

GroupElement GroupElement::from_integer(Group group, const mpz_class& value) {
  CAVSEC_COUNT(member_check);
  if (!group->contains(value)) throw DecodeError("value is not a subgroup member");
  return GroupElement(std::move(group), value);
}

GroupElement GroupElement::random(Group group, Rng& rng) {
  CAVSEC_COUNT(sample);
  mpz_class e = rng.nonzero_below(group->q());
  mpz_class v = powm(group->g(), e, group->p());
  return GroupElement(std::move(group), std::move(v));
}

GroupElement GroupElement::decode(Group group, ByteView data) {
  if (data.size() != group->element_bytes()) throw DecodeError("element has wrong width");
  return from_integer(std::move(group), import_bytes(data));
}

GroupElement GroupElement::decode_trusted(Group group, ByteView data) {
  if (data.size() != group->element_bytes()) throw DecodeError("element has wrong width");
  mpz_class v = import_bytes(data);
  if (v < 1 || v >= group->p()) throw DecodeError("element out of range");
  return GroupElement(std::move(group), std::move(v));
}

Bytes GroupElement::encode() const { return export_fixed(v_, group_->element_bytes()); }

GroupElement GroupElement::operator*(const GroupElement& o) const {
  require_same_group(group_, o.group_);
  CAVSEC_COUNT(group_mul);
  mpz_class r = v_ * o.v_;
  mpz_mod(r.get_mpz_t(), r.get_mpz_t(), group_->p().get_mpz_t());
  return GroupElement(group_, std::move(r));
}

GroupElement GroupElement::inverse() const {
  if (!group_) throw ParamsMismatch("operation on an uninitialised value");
  CAVSEC_COUNT(group_inv);
  mpz_class r;
  mpz_invert(r.get_mpz_t(), v_.get_mpz_t(), group_->p().get_mpz_t());
  return GroupElement(group_, std::move(r));
}

GroupElement GroupElement::pow(const Scalar& e) const {
  require_same_group(group_, e.group());
  CAVSEC_COUNT(exp);
  return GroupElement(group_, powm(v_, e.value(), group_->p()));
}

bool operator==(const GroupElement& a, const GroupElement& b) {
  if (!a.group_ || !b.group_) return !a.group_ && !b.group_;
  return a.v_ == b.v_ && (a.group_ == b.group_ || a.group_->same_values(*b.group_));
}

}  // namespace cavsec
