#import <Foundation/Foundation.h>

@class DKItem;

@protocol DKItemDelegate <NSObject>
- (void)itemDidChange:(DKItem *)item;
@end

@interface DKItem : NSObject
- (void)setDelegate:(id<DKItemDelegate>)delegate;
- (NSSet<NSString *> *)tags;
- (void)performWithBlock:(BOOL (^)(NSInteger, NSString *))block;
- (void *)rawBytes;
- (NSInteger)compare:(DKItem *)other;
@end
