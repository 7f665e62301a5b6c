"""Тесты для SEDM."""
