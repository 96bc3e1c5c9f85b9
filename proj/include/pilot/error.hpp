/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace pilot {

/// Base class of every error raised by the runtime. Each subclass names one
/// failure kind so callers can catch precisely what they can handle.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PILOT_DEFINE_ERROR(Name)                 \
    class Name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    }

// core-model
PILOT_DEFINE_ERROR(InvalidDescription);
PILOT_DEFINE_ERROR(IllegalTransition);

// scheduler
PILOT_DEFINE_ERROR(UnitTooLarge);
PILOT_DEFINE_ERROR(BlockSizeMismatch);
PILOT_DEFINE_ERROR(DoubleFree);

// executor
PILOT_DEFINE_ERROR(IncompatibleMethod);
PILOT_DEFINE_ERROR(SpawnFailure);
PILOT_DEFINE_ERROR(LostChild);

// agent-runtime
PILOT_DEFINE_ERROR(ChannelClosed);
PILOT_DEFINE_ERROR(ConfigError);
PILOT_DEFINE_ERROR(SessionAborted);

// profiler
PILOT_DEFINE_ERROR(InconsistentTrace);
PILOT_DEFINE_ERROR(MissingSyncPoint);
PILOT_DEFINE_ERROR(TraceFormatError);

// analytics
PILOT_DEFINE_ERROR(IncompleteTrace);
PILOT_DEFINE_ERROR(NegativeIdle);
PILOT_DEFINE_ERROR(UnknownEvent);
PILOT_DEFINE_ERROR(MissingEvents);
PILOT_DEFINE_ERROR(TooFewEvents);

#undef PILOT_DEFINE_ERROR

/// Config validation failure. `field()` is the dotted path of the offending
/// key, e.g. `matrix.task_counts[2]`.
class SchemaError : public Error {
public:
    SchemaError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnknownKey : public SchemaError {
public:
    using SchemaError::SchemaError;
};

} // namespace pilot
