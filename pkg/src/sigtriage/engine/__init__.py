"""Rule compilation and scanning."""

from .compiler import CompileError, CompiledRuleSet, compile_rules
from .condition import MatchContext, compile_condition, eval_condition
from .scanner import MAX_OFFSETS, MatchResult, RuleMatch, scan

compile = compile_rules
