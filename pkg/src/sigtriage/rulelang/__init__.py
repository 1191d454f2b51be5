"""YARA-subset rule language: AST, parser and canonical renderer."""

from .ast import *  # noqa: F401,F403
from .ast import Rule, RuleSet
from .parser import (
    DuplicateRuleError, JumpBoundsError, RuleError, RuleLexError, RuleSyntaxError,
    UndefinedPatternError, load_rules, parse_rules, rule_files,
)
from .render import render_condition, render_rule, render_rules
