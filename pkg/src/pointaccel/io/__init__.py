"""File formats of weights, captures, point clouds and reports"""
