from functools import reduce
import operator
print(reduce(operator.add, map(int, input().split())))
